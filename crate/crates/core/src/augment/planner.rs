//! Motion-segment planning between consecutive skill poses.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use crate::geometry::{interpolate_pose, Pose};
use crate::trajectory::{ArmAction, Gripper};

use super::AugmentError;

/// Endpoint tolerance every planner must meet.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Produces `count` poses from `start` to `goal`, both included.
pub trait MotionPlanner: Sync {
    fn plan(&self, start: &Pose, goal: &Pose, count: usize) -> Result<Vec<Pose>, AugmentError>;
}

/// Straight-line translation with geodesic rotation.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearPlanner;

impl MotionPlanner for LinearPlanner {
    fn plan(&self, start: &Pose, goal: &Pose, count: usize) -> Result<Vec<Pose>, AugmentError> {
        if count < 2 {
            return Err(AugmentError::PlannerFailure(format!("need at least 2 poses, asked for {count}")));
        }
        let last = (count - 1) as f64;
        Ok((0..count).map(|i| interpolate_pose(start, goal, i as f64 / last)).collect())
    }
}

/// Runs an external program per request.
///
/// stdin receives the start record, the goal record and the pose count, one
/// per line; stdout must return `count` records. A record is 12 reals:
/// the rotation row-major followed by the translation.
#[derive(Debug, Clone)]
pub struct ExternalProcessPlanner {
    pub program: PathBuf,
    pub args: Vec<String>,
}

fn record_line(p: &Pose) -> String {
    p.to_record().iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

impl MotionPlanner for ExternalProcessPlanner {
    fn plan(&self, start: &Pose, goal: &Pose, count: usize) -> Result<Vec<Pose>, AugmentError> {
        let fail = |m: String| AugmentError::PlannerFailure(format!("{}: {m}", self.program.display()));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        let input = format!("{}\n{}\n{count}\n", record_line(start), record_line(goal));
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(input.as_bytes())
            .map_err(|e| fail(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr).trim())));
        }
        let text = String::from_utf8(out.stdout).map_err(|e| fail(e.to_string()))?;
        let poses = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| fail(format!("line {}: {e}", i + 1)))?;
                let rec: [f64; 12] = vals
                    .try_into()
                    .map_err(|v: Vec<f64>| fail(format!("line {}: expected 12 reals, got {}", i + 1, v.len())))?;
                Pose::from_record(&rec).map_err(|e| fail(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        check_plan(&poses, start, goal, count)?;
        Ok(poses)
    }
}

/// Verifies the planner contract.
pub fn check_plan(poses: &[Pose], start: &Pose, goal: &Pose, count: usize) -> Result<(), AugmentError> {
    if poses.len() != count {
        return Err(AugmentError::PlannerFailure(format!("returned {} poses, expected {count}", poses.len())));
    }
    for (which, got, want) in [("start", &poses[0], start), ("goal", &poses[count - 1], goal)] {
        let (dt, dr) = got.distance_to(want);
        if dt > ENDPOINT_TOL || dr > ENDPOINT_TOL {
            return Err(AugmentError::PlannerFailure(format!(
                "{which} pose off by {dt:.3e} m / {dr:.3e} rad"
            )));
        }
    }
    Ok(())
}

/// `max(1, ⌈d / (v·dt)⌉)` for the translation distance `d`.
pub fn motion_steps(start: &Pose, goal: &Pose, velocity: f64, dt: f64) -> usize {
    let d = (goal.translation - start.translation).norm();
    ((d / (velocity * dt)).ceil() as usize).max(1)
}

/// `steps` frames strictly after `start`, approaching `goal` at equal spacing.
/// With `include_start` the first frame is `start` itself and the spacing is
/// `d / steps`; otherwise it is `d / (steps + 1)`. The goal is never emitted.
pub fn plan_frames(
    start: &Pose,
    goal: &Pose,
    gripper: Gripper,
    steps: usize,
    include_start: bool,
    planner: &dyn MotionPlanner,
) -> Result<Vec<ArmAction>, AugmentError> {
    if steps == 0 {
        return Ok(Vec::new());
    }
    let count = if include_start { steps + 1 } else { steps + 2 };
    let poses = planner.plan(start, goal, count)?;
    check_plan(&poses, start, goal, count)?;
    let skip = usize::from(!include_start);
    Ok(poses[skip..skip + steps].iter().map(|p| ArmAction::new(*p, gripper)).collect())
}

/// Motion frames from `start` towards `goal` at constant velocity; the
/// gripper holds `gripper` throughout.
pub fn plan_motion_segment(
    start: &Pose,
    goal: &Pose,
    gripper: Gripper,
    velocity: f64,
    dt: f64,
    planner: &dyn MotionPlanner,
) -> Result<Vec<ArmAction>, AugmentError> {
    if !(velocity > 0.0 && dt > 0.0) {
        return Err(AugmentError::InvalidSpec(format!("velocity and dt must be positive (v={velocity}, dt={dt})")));
    }
    plan_frames(start, goal, gripper, motion_steps(start, goal, velocity, dt), false, planner)
}
