//! Renders a trajectory into a raw demo bundle: depth frames, keypoint tracks
//! and hand landmarks, at an integer multiple of the control rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{interpolate_pose, Mat3, Pose, Vec3};
use crate::grounding::ObjectMask;
use crate::parse::{CameraModel, DemoBundle, DepthFrame, HandObservation, KeypointTrack, NUM_LANDMARKS};
use crate::trajectory::{Gripper, StateActionTrajectory, NUM_ARMS};

/// Constant camera-frame offset of the landmark XYZ output, meters.
pub const HAND_BIAS: [f64; 3] = [0.02, -0.015, 0.03];
const FAR: f32 = 5.0;
const OPEN_WIDTH: f64 = 0.08;
const CLOSED_WIDTH: f64 = 0.01;
/// Wrist to EE distance along the approach axis.
const PALM: f64 = 0.08;
/// Half side of the square drawn around each point, pixels.
const SPLAT: i64 = 1;
const EMPTY: f32 = f32::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Rendered frames per control step.
    pub upsample: usize,
    /// Std-dev of additive depth noise, meters.
    pub depth_noise: f64,
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            upsample: 3,
            depth_noise: 0.0,
            seed: 0,
        }
    }
}

/// 320×240 camera behind and above the arms, looking at the table.
pub fn default_camera() -> CameraModel {
    let eye = Vec3::new(0.0, -0.75, 0.95);
    let target = Vec3::new(0.0, 0.35, 0.1);
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    CameraModel {
        fx: 320.0,
        fy: 320.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
        extrinsics: Pose::from_parts(Mat3::from_columns(&[right, down, forward]), eye),
    }
}

fn width_of(g: Gripper) -> f64 {
    match g {
        Gripper::Open => OPEN_WIDTH,
        Gripper::Closed => CLOSED_WIDTH,
    }
}

/// Task-frame landmark positions for an EE pose and finger gap.
fn landmarks(pose: &Pose, width: f64) -> [Vec3; NUM_LANDMARKS] {
    let closing = pose.rotation.column(1).into_owned();
    let approach = pose.rotation.column(2).into_owned();
    let ee = pose.translation;
    let wrist = ee - PALM * approach;
    let thumb = ee - 0.5 * width * closing;
    let index = ee + 0.5 * width * closing;
    let mut out = [wrist; NUM_LANDMARKS];
    for i in 1..=4 {
        let s = i as f64 / 4.0;
        out[i] = wrist + s * (thumb - wrist);
        out[4 + i] = wrist + s * (index - wrist);
    }
    for (f, base) in [9usize, 13, 17].into_iter().enumerate() {
        let tip = index - 0.012 * (f + 1) as f64 * approach;
        for i in 0..4 {
            out[base + i] = wrist + (i + 1) as f64 / 4.0 * (tip - wrist);
        }
    }
    out
}

fn table_depth(camera: &CameraModel) -> DepthFrame {
    let mut frame = DepthFrame::filled(camera.width, camera.height, FAR);
    let eye = camera.extrinsics.translation;
    for row in 0..camera.height {
        for col in 0..camera.width {
            let ray = camera.extrinsics.apply_vector(&camera.unproject(col as f64, row as f64, 1.0));
            if ray.z < 0.0 {
                frame.set(col, row, (-eye.z / ray.z) as f32);
            }
        }
    }
    frame
}

fn splat(frame: &mut DepthFrame, camera: &CameraModel, u: f64, v: f64, depth: f64) {
    let Some((ci, cj)) = camera.pixel_index(u, v) else { return };
    for dj in -SPLAT..=SPLAT {
        for di in -SPLAT..=SPLAT {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i >= camera.width as i64 || j >= camera.height as i64 {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            if (depth as f32) < frame.get(i, j) {
                frame.set(i, j, depth as f32);
            }
        }
    }
}

/// Bundle whose every `upsample`-th frame is exactly a trajectory step, plus
/// per-object masks of the first frame.
pub fn render_bundle(
    traj: &StateActionTrajectory,
    camera: &CameraModel,
    options: &RenderOptions,
) -> (DemoBundle, Vec<ObjectMask>) {
    let up = options.upsample.max(1);
    let frames = (traj.len() - 1) * up + 1;
    let n = traj.num_keypoints();
    let table = table_depth(camera);
    let to_cam = camera.extrinsics.inverse();
    let noise = Normal::new(0.0, options.depth_noise.max(0.0)).expect("finite std-dev");
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut tracks: Vec<KeypointTrack> = traj
        .keypoints
        .iter()
        .map(|m| KeypointTrack {
            id: m.id,
            label: m.label.clone(),
            group: m.group,
            object: m.object,
            uv: Vec::with_capacity(frames),
        })
        .collect();
    let mut hands: [Vec<Option<HandObservation>>; NUM_ARMS] = [Vec::new(), Vec::new()];
    let mut depth = Vec::with_capacity(frames);
    let mut masks = vec![ObjectMask::empty(camera.width, camera.height); traj.num_objects()];

    for f in 0..frames {
        let (t, r) = (f / up, f % up);
        let s = r as f64 / up as f64;
        let next = (t + 1).min(traj.len() - 1);
        let mut img = DepthFrame::filled(camera.width, camera.height, EMPTY);
        for i in 0..n {
            let p = if r == 0 {
                traj.state(t)[i]
            } else {
                traj.state(t)[i] * (1.0 - s) + traj.state(next)[i] * s
            };
            let (u, v, d) = camera.project(&p);
            tracks[i].uv.push([u, v]);
            if d > 0.0 {
                splat(&mut img, camera, u, v, d);
                if f == 0 {
                    if let Some((ci, cj)) = camera.pixel_index(u, v) {
                        let mask = &mut masks[traj.keypoints[i].object - 1];
                        for j in cj.saturating_sub(1)..=(cj + 1).min(camera.height - 1) {
                            for c in ci.saturating_sub(1)..=(ci + 1).min(camera.width - 1) {
                                mask.set(c, j, true);
                            }
                        }
                    }
                }
            }
        }
        for arm in 0..NUM_ARMS {
            let (a, b) = (&traj.actions[t][arm], &traj.actions[next][arm]);
            let (pose, width) = if r == 0 {
                (a.pose, width_of(a.gripper))
            } else {
                (
                    interpolate_pose(&a.pose, &b.pose, s),
                    width_of(a.gripper) * (1.0 - s) + width_of(b.gripper) * s,
                )
            };
            let lm = landmarks(&pose, width);
            let mut obs = [[0.0; 5]; NUM_LANDMARKS];
            for (o, p) in obs.iter_mut().zip(&lm) {
                let (u, v, _) = camera.project(p);
                let c = to_cam.apply(p);
                *o = [u, v, c.x + HAND_BIAS[0], c.y + HAND_BIAS[1], c.z + HAND_BIAS[2]];
            }
            let (u, v, d) = camera.project(&lm[0]);
            if d > 0.0 {
                splat(&mut img, camera, u, v, d);
            }
            hands[arm].push(Some(obs));
        }
        // points rest on or above the table, so they always win over it
        for (x, bg) in img.data.iter_mut().zip(&table.data) {
            if *x == EMPTY {
                *x = *bg;
            }
        }
        if options.depth_noise > 0.0 {
            for x in img.data.iter_mut() {
                *x = (*x as f64 + noise.sample(&mut rng)).max(1e-3) as f32;
            }
        }
        depth.push(img);
    }
    let bundle = DemoBundle {
        camera: *camera,
        fps: up as f64 / traj.dt,
        depth,
        tracks,
        hands,
    };
    (bundle, masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_demo, ParseConfig};
    use crate::synthetic::SyntheticTask;

    #[test]
    fn camera_is_valid_and_sees_the_table() {
        let cam = default_camera();
        cam.validate().unwrap();
        let (u, v, d) = cam.project(&Vec3::new(0.0, 0.35, 0.1));
        assert!((u - 160.0).abs() < 1e-9 && (v - 120.0).abs() < 1e-9 && d > 0.0);
    }

    #[test]
    fn noiseless_round_trip_recovers_ground_truth() {
        for task in SyntheticTask::ALL {
            let gt = task.ground_truth().unwrap();
            let (bundle, _) = render_bundle(&gt, &default_camera(), &RenderOptions::default());
            let parsed = parse_demo(&bundle, &ParseConfig::default()).unwrap().trajectory;
            assert_eq!(parsed.len(), gt.len(), "{task}");
            let mut worst = 0.0f64;
            for t in 0..gt.len() {
                for j in 0..NUM_ARMS {
                    let (dt, dr) = parsed.pose(t, j).distance_to(gt.pose(t, j));
                    worst = worst.max(dt).max(dr);
                    assert_eq!(parsed.gripper(t, j), gt.gripper(t, j), "{task} t={t} arm {j}");
                }
                for (p, q) in parsed.state(t).iter().zip(gt.state(t)) {
                    worst = worst.max((p - q).norm());
                }
            }
            assert!(worst < 1e-6, "{task}: worst error {worst:e}");
        }
    }
}
