//! Scripted bimanual tasks with exact ground truth.
//!
//! Each task builds a 10 Hz state-action trajectory from waypoints and then
//! settles it into the fixed point of identity augmentation, so that the
//! ground truth is already in the form augmentation produces.

mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_demo, AugmentError, AugmentOptions, AugmentationSpec, LinearPlanner, ObjectSampler, PreparedDemo,
    StepRule,
};
use crate::geometry::{axis_angle, interpolate_pose, rotation_angle, Mat3, Plane, Pose, Vec3};
use crate::grounding::{
    ContactToken, GroundingConfig, ObjectConfiguration, SegmentTimeline, Stage, TaskTemplate, TemplateAction,
};
use crate::trajectory::{ArmAction, BimanualAction, Gripper, KeypointMeta, StateActionTrajectory};
use crate::workspace::{ArmReach, WorkspaceBox};

pub use render::{default_camera, render_bundle, RenderOptions, HAND_BIAS};

/// Control period of the scripted demos, seconds.
pub const SCRIPT_DT: f64 = 0.1;
/// Translation per scripted step, meters.
const STEP: f64 = 0.025;
/// Rotation per scripted step, radians.
const TURN: f64 = 0.15;
/// Bottle tilt at the end of the pour.
pub const POUR_ANGLE: f64 = 2.0;
const FIXED_POINT_ITERS: usize = 10;
const FIXED_POINT_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
#[error("unknown task '{0}', expected one of: pour, handover")]
pub struct UnknownTask(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    /// Left arm pours from a bottle into a cup held by the right arm.
    Pour,
    /// Left arm picks a bar, hands it to the right arm, which places it in a goal box.
    Handover,
}

impl FromStr for SyntheticTask {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pour" => Ok(Self::Pour),
            "handover" => Ok(Self::Handover),
            other => Err(UnknownTask(other.to_string())),
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pour => "pour",
            Self::Handover => "handover",
        })
    }
}

/// EE orientation used by both arms: approach along +y, fingers closing along x.
pub fn forward_rotation() -> Mat3 {
    Mat3::from_columns(&[Vec3::z(), Vec3::x(), Vec3::y()])
}

fn at(x: f64, y: f64, z: f64) -> Pose {
    Pose::from_parts(forward_rotation(), Vec3::new(x, y, z))
}

fn action(arm: Option<usize>, a: ContactToken, b: ContactToken, reference: usize) -> TemplateAction {
    TemplateAction {
        arm,
        contact: [a, b],
        reference,
    }
}

/// Centered box the handed-over bar must end in.
pub fn handover_goal() -> WorkspaceBox {
    WorkspaceBox {
        min: [-0.06, 0.54, -0.02],
        max: [0.06, 0.66, 0.08],
    }
}

fn bottle_base() -> Vec3 {
    Vec3::new(-0.2, 0.35, 0.0)
}

fn cup_base() -> Vec3 {
    Vec3::new(0.2, 0.35, 0.0)
}

fn bar_base() -> Vec3 {
    Vec3::new(-0.25, 0.35, 0.0)
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

impl SyntheticTask {
    pub const ALL: [SyntheticTask; 2] = [SyntheticTask::Pour, SyntheticTask::Handover];

    pub fn num_objects(&self) -> usize {
        match self {
            Self::Pour => 2,
            Self::Handover => 1,
        }
    }

    /// Height of the table the objects rest on.
    pub fn support_height(&self) -> f64 {
        0.0
    }

    pub fn template(&self) -> TaskTemplate {
        use ContactToken::{Ee, Object};
        let stages = match self {
            Self::Pour => vec![
                Stage {
                    sync: false,
                    actions: vec![
                        action(Some(0), Ee(0), Object(1), 1),
                        action(Some(1), Ee(1), Object(2), 2),
                    ],
                },
                Stage {
                    sync: true,
                    actions: vec![action(None, Object(1), Object(2), 2)],
                },
            ],
            Self::Handover => vec![
                Stage {
                    sync: false,
                    actions: vec![action(Some(0), Ee(0), Object(1), 1)],
                },
                Stage {
                    sync: true,
                    actions: vec![action(None, Ee(0), Ee(1), 1)],
                },
                Stage {
                    sync: false,
                    actions: vec![action(Some(1), Ee(1), Object(1), 0)],
                },
            ],
        };
        TaskTemplate {
            num_objects: self.num_objects(),
            stages,
        }
    }

    /// `(object, label, group, position)` for every keypoint at t = 0.
    fn keypoint_layout(&self) -> Vec<(usize, &'static str, u32, Vec3)> {
        match self {
            Self::Pour => {
                let b = bottle_base();
                let c = cup_base();
                vec![
                    (1, "bottle_base", 0, b),
                    (1, "bottle_body", 1, b + Vec3::new(0.0, 0.0, 0.08)),
                    (1, "bottle_shoulder", 2, b + Vec3::new(0.0, 0.0, 0.16)),
                    (1, "bottle_tip", 3, b + Vec3::new(0.0, 0.0, 0.20)),
                    (2, "cup_rim_px", 4, c + Vec3::new(0.04, 0.0, 0.10)),
                    (2, "cup_rim_nx", 4, c + Vec3::new(-0.04, 0.0, 0.10)),
                    (2, "cup_rim_py", 4, c + Vec3::new(0.0, 0.04, 0.10)),
                    (2, "cup_rim_ny", 4, c + Vec3::new(0.0, -0.04, 0.10)),
                    (2, "cup_body_px", 5, c + Vec3::new(0.04, 0.0, 0.05)),
                    (2, "cup_body_nx", 5, c + Vec3::new(-0.04, 0.0, 0.05)),
                ]
            }
            Self::Handover => {
                let b = bar_base();
                vec![
                    (1, "bar_left", 0, b + Vec3::new(-0.05, 0.0, 0.03)),
                    (1, "bar_right", 0, b + Vec3::new(0.05, 0.0, 0.03)),
                    (1, "bar_top", 1, b + Vec3::new(0.0, 0.0, 0.06)),
                    (1, "bar_bottom", 2, b),
                ]
            }
        }
    }

    pub fn keypoint_meta(&self) -> Vec<KeypointMeta> {
        self.keypoint_layout()
            .into_iter()
            .enumerate()
            .map(|(i, (object, label, group, _))| KeypointMeta {
                id: i as u32,
                label: label.to_string(),
                group,
                object,
            })
            .collect()
    }

    pub fn initial_keypoints(&self) -> Vec<Vec3> {
        self.keypoint_layout().into_iter().map(|(.., p)| p).collect()
    }

    /// Object frames of the demo: keypoint centroids with identity rotation.
    pub fn demo_config(&self) -> ObjectConfiguration {
        let pts = self.initial_keypoints();
        let meta = self.keypoint_meta();
        let ownership = ObjectConfiguration::ownership_from_meta(&meta, self.num_objects());
        let frames = ownership
            .iter()
            .map(|idx| Pose::from_translation(centroid(&idx.iter().map(|&i| pts[i]).collect::<Vec<_>>())))
            .collect();
        ObjectConfiguration { frames, ownership }
    }

    /// Default augmentation spec for the task.
    pub fn spec(&self) -> AugmentationSpec {
        let arms = [
            ArmReach {
                base: [-0.35, -0.15, 0.0],
                reach: 0.8,
            },
            ArmReach {
                base: [0.35, -0.15, 0.0],
                reach: 0.8,
            },
        ];
        let workspace = WorkspaceBox {
            min: [-0.6, -0.2, -0.01],
            max: [0.6, 0.9, 0.6],
        };
        let (object_samplers, arms, min_separation) = match self {
            Self::Pour => {
                let s = ObjectSampler {
                    translation_range: [[-0.1, 0.1], [-0.1, 0.1], [0.0, 0.0]],
                    yaw_range: [-0.5, 0.5],
                };
                (vec![s.clone(), s], arms, 0.15)
            }
            Self::Handover => {
                let s = ObjectSampler {
                    translation_range: [[-0.1, 0.55], [-0.1, 0.1], [0.0, 0.0]],
                    yaw_range: [0.0, 0.0],
                };
                let short = arms.map(|a| ArmReach { reach: 0.6, ..a });
                (vec![s], short, 0.0)
            }
        };
        AugmentationSpec {
            workspace,
            arms,
            symmetry_plane: Plane::yz(),
            object_samplers,
            min_separation,
            velocity: STEP / SCRIPT_DT,
            dt: SCRIPT_DT,
            seed: 0,
            count: 1,
            max_retries: 1000,
        }
    }

    /// Task success from the first and last keypoint states.
    pub fn success(&self, _initial: &[Vec3], last: &[Vec3]) -> bool {
        match self {
            Self::Pour => {
                let (base, tip) = (last[0], last[3]);
                let cup = centroid(&last[4..10]);
                let axis = tip - base;
                if axis.norm() < 1e-9 {
                    return false;
                }
                let tilt = axis.normalize().dot(&Vec3::z()).clamp(-1.0, 1.0).acos();
                (tip - cup).norm() <= 0.03 && (tilt - POUR_ANGLE).abs() <= 10f64.to_radians()
            }
            Self::Handover => handover_goal().contains(&centroid(last)),
        }
    }

    /// Waypoint script before settling.
    pub fn draft(&self) -> StateActionTrajectory {
        let [a0, a1] = match self {
            Self::Pour => pour_script(),
            Self::Handover => handover_script(),
        };
        let init = self.initial_keypoints();
        let len = a0.len();
        let actions: Vec<BimanualAction> = a0.into_iter().zip(a1).map(|(x, y)| [x, y]).collect();
        let states = (0..len).flat_map(|_| init.iter().copied()).collect();
        StateActionTrajectory::new(SCRIPT_DT, self.keypoint_meta(), states, actions)
            .expect("scripted trajectory is well formed")
    }

    /// Ground-truth trajectory: the draft iterated through identity
    /// augmentation until actions, states and grounding stop changing.
    pub fn ground_truth(&self) -> Result<StateActionTrajectory, AugmentError> {
        let template = self.template();
        let config = self.demo_config();
        let thresholds = GroundingConfig::default();
        let options = AugmentOptions {
            velocity: STEP / SCRIPT_DT,
            dt: SCRIPT_DT,
            steps: StepRule::DemoMatched,
        };
        let identity = vec![Pose::identity(); self.num_objects()];
        let mut traj = self.draft();
        let mut last_timeline: Option<SegmentTimeline> = None;
        for _ in 0..FIXED_POINT_ITERS {
            let prepared = PreparedDemo::new(traj.clone(), template.clone(), config.clone(), &thresholds)?;
            let out = augment_demo(&prepared, &identity, &options, &LinearPlanner)?;
            let stable = last_timeline.as_ref() == Some(&prepared.grounding.timeline);
            if stable && same_trajectory(&out.trajectory, &traj) {
                return Ok(traj);
            }
            last_timeline = Some(prepared.grounding.timeline);
            traj = out.trajectory;
        }
        Err(AugmentError::Inconsistent(format!(
            "{self}: scripted demo did not settle in {FIXED_POINT_ITERS} iterations"
        )))
    }
}

fn same_trajectory(a: &StateActionTrajectory, b: &StateActionTrajectory) -> bool {
    a.len() == b.len()
        && a.actions.iter().zip(&b.actions).all(|(x, y)| {
            x.iter().zip(y).all(|(p, q)| {
                let (dt, dr) = p.pose.distance_to(&q.pose);
                p.gripper == q.gripper && dt <= FIXED_POINT_TOL && dr <= FIXED_POINT_TOL
            })
        })
        && a.states_flat().iter().zip(b.states_flat()).all(|(p, q)| (p - q).norm() <= FIXED_POINT_TOL)
}

/// One arm's waypoint script.
struct Script {
    frames: Vec<ArmAction>,
}

impl Script {
    fn new(pose: Pose) -> Self {
        Self {
            frames: vec![ArmAction::new(pose, Gripper::Open)],
        }
    }

    fn last(&self) -> ArmAction {
        *self.frames.last().expect("script is never empty")
    }

    fn len(&self) -> usize {
        self.frames.len()
    }

    fn hold(&mut self, n: usize) -> &mut Self {
        let a = self.last();
        self.frames.extend(std::iter::repeat_n(a, n));
        self
    }

    fn hold_until(&mut self, len: usize) -> &mut Self {
        self.hold(len.saturating_sub(self.len()))
    }

    /// Straight line to `goal` over `steps` frames, the last one at `goal`.
    fn line(&mut self, goal: Pose, steps: usize) -> &mut Self {
        let a = self.last();
        for i in 1..=steps {
            let p = interpolate_pose(&a.pose, &goal, i as f64 / steps as f64);
            self.frames.push(ArmAction::new(p, a.gripper));
        }
        self
    }

    fn travel(&mut self, goal: Pose) -> &mut Self {
        let n = steps_between(&self.last().pose, &goal);
        self.line(goal, n)
    }

    fn grip(&mut self, g: Gripper) -> &mut Self {
        let a = self.last();
        self.frames.push(ArmAction::new(a.pose, g));
        self
    }
}

fn steps_between(a: &Pose, b: &Pose) -> usize {
    let d = (b.translation - a.translation).norm();
    let r = rotation_angle(&(a.rotation.transpose() * b.rotation));
    ((d / STEP).ceil() as usize).max((r / TURN).ceil() as usize).max(1)
}

/// Both arms travel together: each line gets the larger of the two step counts.
fn travel_together(s0: &mut Script, g0: Pose, s1: &mut Script, g1: Pose) {
    let n = steps_between(&s0.last().pose, &g0).max(steps_between(&s1.last().pose, &g1));
    s0.line(g0, n);
    s1.line(g1, n);
}

fn pour_script() -> [Vec<ArmAction>; 2] {
    let mut s0 = Script::new(at(-0.3, -0.05, 0.3));
    let mut s1 = Script::new(at(0.3, -0.05, 0.3));

    let body = bottle_base() + Vec3::new(0.0, 0.0, 0.08);
    let handle = cup_base() + Vec3::new(0.04, 0.0, 0.05);
    travel_together(
        &mut s0,
        at(body.x, body.y - 0.08, body.z),
        &mut s1,
        at(handle.x, handle.y - 0.08, handle.z),
    );
    s0.line(at(body.x, body.y, body.z), 4).grip(Gripper::Closed).hold(2);
    s1.line(at(handle.x, handle.y, handle.z), 4).grip(Gripper::Closed).hold(2);
    s0.line(at(body.x, body.y, body.z + 0.06), 3);
    s1.line(at(handle.x, handle.y, handle.z + 0.04), 2);
    let n = s0.len().max(s1.len());
    s0.hold_until(n);
    s1.hold_until(n);

    let hold_pose = at(0.25, 0.35, 0.22);
    travel_together(&mut s0, at(0.0, 0.35, 0.30), &mut s1, hold_pose);

    // the cup follows arm 1 rigidly, so its final centroid is known
    let cup0 = centroid(&SyntheticTask::Pour.initial_keypoints()[4..10]);
    let cup = cup0 + (hold_pose.translation - handle);
    let tilt = axis_angle(&Vec3::y(), POUR_ANGLE);
    let tip = cup + Vec3::new(0.0, 0.0, 0.02);
    let grip = tip - tilt * Vec3::new(0.0, 0.0, 0.12);
    s0.travel(Pose::from_parts(tilt * forward_rotation(), grip)).hold(5);
    s1.hold_until(s0.len());
    [s0.frames, s1.frames]
}

fn handover_script() -> [Vec<ArmAction>; 2] {
    let mut s0 = Script::new(at(-0.3, -0.05, 0.3));
    let mut s1 = Script::new(at(0.3, -0.05, 0.3));

    let left = bar_base() + Vec3::new(-0.05, 0.0, 0.03);
    s0.travel(at(left.x, left.y - 0.07, left.z))
        .line(at(left.x, left.y, left.z), 3)
        .grip(Gripper::Closed)
        .hold(2)
        .line(at(left.x, left.y, left.z + 0.06), 3);
    s1.hold_until(s0.len());

    let meet = Vec3::new(-0.05, 0.35, 0.40);
    let other = meet + Vec3::new(0.1, 0.0, 0.0);
    travel_together(
        &mut s0,
        at(meet.x, meet.y, meet.z),
        &mut s1,
        at(other.x, other.y - 0.08, other.z),
    );
    s1.line(at(other.x, other.y, other.z), 3).grip(Gripper::Closed).hold(2);
    s0.hold_until(s1.len());
    s0.grip(Gripper::Open).hold(2);
    s1.hold_until(s0.len());

    let place = Vec3::new(0.05, 0.6, 0.03);
    s1.travel(at(place.x, place.y, place.z + 0.09))
        .line(at(place.x, place.y, place.z), 3)
        .grip(Gripper::Open)
        .hold(2)
        .line(at(place.x, place.y - 0.07, place.z), 3)
        .hold(3);
    s0.hold_until(s1.len());
    [s0.frames, s1.frames]
}
