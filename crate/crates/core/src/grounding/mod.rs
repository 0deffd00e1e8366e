//! Task templates and their grounding onto a parsed demo.

mod objects;
mod template;
mod timeline;

use thiserror::Error;

use crate::geometry::{reflect_point, reflect_pose, Plane};
use crate::trajectory::{ArmAction, StateActionTrajectory};

pub use objects::{object_frames_from_masks, ObjectConfiguration, ObjectMask, MIN_MASK_PIXELS};
pub use template::{ContactToken, Stage, TaskTemplate, TemplateAction, TemplateViolation, ViolationKind};
pub use timeline::{
    ground_segments, EventKind, GraspEvent, GraspEventLog, Grounding, GroundingConfig, Segment, SegmentKind,
    SegmentTimeline,
};

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("invalid template: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTemplate(Vec<TemplateViolation>),
    #[error("object {object}: mask has no pixels with valid depth")]
    EmptyMask { object: usize },
    #[error("{path}: invalid mask: {reason}")]
    InvalidMask { path: String, reason: String },
    #[error("template has {template} objects, configuration has {config}")]
    ObjectCount { template: usize, config: usize },
    #[error("keypoint ownership: {0}")]
    Ownership(String),
    #[error("thresholds must be positive (eps_skill={eps_skill}, eps_sync={eps_sync})")]
    InvalidThreshold { eps_skill: f64, eps_sync: f64 },
    #[error("stage {stage}{}: no frames satisfy the skill threshold", .arm.map(|a| format!(", arm {a}")).unwrap_or_default())]
    NoSkillSegment { stage: usize, arm: Option<usize> },
    #[error("stage {stage}: detected intervals out of template order: {detail}")]
    NonMonotoneStages { stage: usize, detail: String },
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

/// Mirror image of a demo: keypoints reflected, arm streams exchanged and reflected.
pub fn mirror_trajectory(traj: &StateActionTrajectory, plane: &Plane) -> StateActionTrajectory {
    let mut out = traj.clone();
    for t in 0..out.len() {
        for p in out.state_mut(t) {
            *p = reflect_point(p, plane);
        }
        let [a0, a1] = traj.actions[t];
        let reflect = |a: ArmAction| ArmAction::new(reflect_pose(&a.pose, plane), a.gripper);
        out.actions[t] = [reflect(a1), reflect(a0)];
    }
    out
}

pub fn mirror_configuration(config: &ObjectConfiguration, plane: &Plane) -> ObjectConfiguration {
    ObjectConfiguration {
        frames: config.frames.iter().map(|f| reflect_pose(f, plane)).collect(),
        ownership: config.ownership.clone(),
    }
}

/// Mirrored trajectory, configuration and arm-swapped template.
pub fn mirror_template_inputs(
    traj: &StateActionTrajectory,
    config: &ObjectConfiguration,
    template: &TaskTemplate,
    plane: &Plane,
) -> (StateActionTrajectory, ObjectConfiguration, TaskTemplate) {
    (
        mirror_trajectory(traj, plane),
        mirror_configuration(config, plane),
        template.swap_arms(),
    )
}
