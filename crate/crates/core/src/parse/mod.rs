//! Demo bundle → robot-executable state-action trajectory.

mod bundle;
mod camera;
mod depth;
mod hand;
mod repair;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::trajectory::{ArmAction, KeypointMeta, StateActionTrajectory, NUM_ARMS};
use crate::workspace::{BoxAndSphereReach, Reachability};

pub use bundle::{depth_path, DemoBundle, DepthFrame, HandObservation, KeypointTrack};
pub use camera::CameraModel;
pub use depth::{backproject_track, robust_median, window_depth, LiftedTrack, MAD_CUTOFF};
pub use hand::{gripper_signal, hand_to_ee, HandFrame, INDEX_TIP, NUM_LANDMARKS, THUMB_TIP, WRIST};
pub use repair::{repair_trajectory, NaturalCubicSpline, RepairedPoses};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("invalid parse configuration: {0}")]
    InvalidConfig(String),
    #[error("no valid depth in any frame{}", .track.map(|t| format!(" for track {t}")).unwrap_or_default())]
    AllDepthInvalid { track: Option<u32> },
    #[error("degenerate hand{}: {reason}", location(.arm, .frame))]
    DegenerateHand {
        arm: Option<usize>,
        frame: Option<usize>,
        reason: &'static str,
    },
    #[error("arm {arm}: no hand detected in any frame")]
    MissingHand { arm: usize },
    #[error("unrepairable trajectory{}: {reason}", .arm.map(|a| format!(" (arm {a})")).unwrap_or_default())]
    Unrepairable { arm: Option<usize>, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

fn location(arm: &Option<usize>, frame: &Option<usize>) -> String {
    match (arm, frame) {
        (Some(a), Some(f)) => format!(" (arm {a}, frame {f})"),
        (Some(a), None) => format!(" (arm {a})"),
        (None, Some(f)) => format!(" (frame {f})"),
        (None, None) => String::new(),
    }
}

/// Tunables for [`parse_demo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseConfig {
    /// Side of the square depth window, odd, pixels.
    pub depth_window: usize,
    pub close_thresh: f64,
    pub open_thresh: f64,
    /// Fastest plausible EE speed, m/s; faster steps count as tracking jumps.
    pub v_jump: f64,
    /// Output control rate, Hz.
    pub control_rate: f64,
    pub reach: BoxAndSphereReach,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            depth_window: 3,
            close_thresh: 0.02,
            open_thresh: 0.05,
            v_jump: 2.0,
            control_rate: 10.0,
            reach: BoxAndSphereReach::default(),
        }
    }
}

/// Per-run bookkeeping of what [`parse_demo`] had to fix.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseDiagnostics {
    /// Per track: number of frames whose depth was interpolated.
    pub interpolated_keypoint_frames: Vec<usize>,
    /// Per arm: frames replaced by the repair step.
    pub repaired_frames: [usize; NUM_ARMS],
    /// Per arm: frames where the wrist had no valid depth for the landmark correction.
    pub uncorrected_hand_frames: [usize; NUM_ARMS],
}

#[derive(Debug, Clone)]
pub struct ParsedDemo {
    pub trajectory: StateActionTrajectory,
    pub diagnostics: ParseDiagnostics,
}

/// Source frame indices kept when resampling `len` frames from `fps` to `rate`.
pub fn resample_indices(len: usize, fps: f64, rate: f64) -> Vec<usize> {
    let ratio = fps / rate;
    let count = ((len as f64) / ratio - 1e-9).ceil().max(1.0) as usize;
    (0..count)
        .map(|i| ((i as f64 * ratio).round() as usize).min(len - 1))
        .collect()
}

/// Landmarks moved into the task frame, translated so the wrist sits at its
/// depth-image position. Frames without wrist depth reuse the nearest
/// available correction.
fn corrected_hands(
    bundle: &DemoBundle,
    arm: usize,
    window: usize,
) -> (Vec<Option<HandFrame>>, usize) {
    let cam = &bundle.camera;
    let offsets: Vec<Option<Vec3>> = bundle.hands[arm]
        .iter()
        .zip(&bundle.depth)
        .map(|(obs, frame)| {
            let obs = obs.as_ref()?;
            let [u, v, x, y, z] = obs[WRIST];
            let d = window_depth(frame, cam, u, v, window)?;
            Some(cam.unproject(u, v, d) - Vec3::new(x, y, z))
        })
        .collect();
    let uncorrected = bundle.hands[arm]
        .iter()
        .zip(&offsets)
        .filter(|(h, o)| h.is_some() && o.is_none())
        .count();
    let offsets = depth::fill_gaps(&offsets).map(|(p, _)| p);
    let frames = bundle.hands[arm]
        .iter()
        .enumerate()
        .map(|(t, obs)| {
            let obs = obs.as_ref()?;
            let shift = offsets.as_ref().map_or_else(Vec3::zeros, |o| o[t]);
            let mut landmarks = [Vec3::zeros(); NUM_LANDMARKS];
            for (dst, src) in landmarks.iter_mut().zip(obs.iter()) {
                *dst = cam.extrinsics.apply(&(Vec3::new(src[2], src[3], src[4]) + shift));
            }
            Some(HandFrame { landmarks })
        })
        .collect();
    (frames, uncorrected)
}

struct ArmStream {
    actions: Vec<ArmAction>,
    repaired: usize,
    uncorrected: usize,
}

fn parse_arm(
    bundle: &DemoBundle,
    config: &ParseConfig,
    arm: usize,
) -> Result<ArmStream, ParseError> {
    let (hands, uncorrected) = corrected_hands(bundle, arm, config.depth_window);
    if hands.iter().all(|h| h.is_none()) {
        return Err(ParseError::MissingHand { arm });
    }
    let mut poses = Vec::with_capacity(hands.len());
    for (t, h) in hands.iter().enumerate() {
        let pose = match h {
            Some(h) => Some(hand_to_ee(h).map_err(|e| match e {
                ParseError::DegenerateHand { reason, .. } => ParseError::DegenerateHand {
                    arm: Some(arm),
                    frame: Some(t),
                    reason,
                },
                other => other,
            })?),
            None => None,
        };
        poses.push(pose);
    }
    let distances: Vec<Option<f64>> = hands.iter().map(|h| h.map(|h| h.pinch_distance())).collect();
    let grippers = gripper_signal(&distances, config.close_thresh, config.open_thresh)?;
    let reach = &config.reach;
    let repaired = repair_trajectory(&poses, 1.0 / bundle.fps, config.v_jump, |p| reach.reachable(arm, p))
        .map_err(|e| match e {
            ParseError::Unrepairable { reason, .. } => ParseError::Unrepairable {
                arm: Some(arm),
                reason,
            },
            other => other,
        })?;
    Ok(ArmStream {
        actions: repaired
            .poses
            .iter()
            .zip(&grippers)
            .map(|(p, g)| ArmAction::new(*p, *g))
            .collect(),
        repaired: repaired.repaired.iter().filter(|b| **b).count(),
        uncorrected,
    })
}

/// Lifts keypoint tracks, retargets both hands to gripper commands, repairs
/// the EE streams and resamples everything to the control rate.
pub fn parse_demo(bundle: &DemoBundle, config: &ParseConfig) -> Result<ParsedDemo, ParseError> {
    bundle.validate()?;
    if !(config.control_rate > 0.0) {
        return Err(ParseError::InvalidConfig(format!(
            "control rate must be positive, got {}",
            config.control_rate
        )));
    }
    let lifted: Vec<LiftedTrack> = bundle
        .tracks
        .par_iter()
        .map(|tr| {
            backproject_track(&tr.uv, &bundle.depth, &bundle.camera, config.depth_window).map_err(|e| match e {
                ParseError::AllDepthInvalid { .. } => ParseError::AllDepthInvalid { track: Some(tr.id) },
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;
    let arms: Vec<ArmStream> = (0..NUM_ARMS)
        .into_par_iter()
        .map(|arm| parse_arm(bundle, config, arm))
        .collect::<Result<_, _>>()?;

    let indices = resample_indices(bundle.num_frames(), bundle.fps, config.control_rate);
    let keypoints: Vec<KeypointMeta> = bundle
        .tracks
        .iter()
        .map(|t| KeypointMeta {
            id: t.id,
            label: t.label.clone(),
            group: t.group,
            object: t.object,
        })
        .collect();
    let mut states = Vec::with_capacity(indices.len() * keypoints.len());
    let mut actions = Vec::with_capacity(indices.len());
    for &src in &indices {
        states.extend(lifted.iter().map(|l| l.points[src]));
        actions.push([arms[0].actions[src], arms[1].actions[src]]);
    }
    let trajectory = StateActionTrajectory::new(1.0 / config.control_rate, keypoints, states, actions)
        .map_err(|e| ParseError::InvalidBundle(e.to_string()))?;
    Ok(ParsedDemo {
        trajectory,
        diagnostics: ParseDiagnostics {
            interpolated_keypoint_frames: lifted.iter().map(|l| l.interpolated.iter().filter(|b| **b).count()).collect(),
            repaired_frames: [arms[0].repaired, arms[1].repaired],
            uncorrected_hand_frames: [arms[0].uncorrected, arms[1].uncorrected],
        },
    })
}
