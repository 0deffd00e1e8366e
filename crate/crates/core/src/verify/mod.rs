//! Invariant checks over augmented demos and a kinematic replay.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::augment::{propagate_keypoints, AugmentError, AugmentOptions, AugmentedDemo, PieceKind, PreparedDemo, StepRule};
use crate::geometry::{orthonormality_residual, Pose, Vec3};
use crate::grounding::{GraspEventLog, SegmentKind};
use crate::synthetic::SyntheticTask;
use crate::trajectory::{BimanualAction, StateActionTrajectory, NUM_ARMS};
use crate::workspace::WorkspaceBox;

/// Absolute tolerance of every exact-geometry check.
pub const CHECK_TOL: f64 = 1e-9;

/// Offending frames kept per check.
const MAX_REPORTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub velocity: f64,
    pub dt: f64,
    pub steps: StepRule,
    pub workspace: Option<WorkspaceBox>,
}

impl From<&AugmentOptions> for VerifyOptions {
    fn from(o: &AugmentOptions) -> Self {
        Self {
            velocity: o.velocity,
            dt: o.dt,
            steps: o.steps,
            workspace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst excess over the allowed value; `0` when the check passes exactly.
    pub residual: f64,
    /// First offending frames (or stage indices for segment-level checks).
    pub offending: Vec<usize>,
}

struct Check {
    name: &'static str,
    tol: f64,
    residual: f64,
    offending: Vec<usize>,
}

impl Check {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            tol,
            residual: 0.0,
            offending: Vec::new(),
        }
    }

    fn record(&mut self, at: usize, residual: f64) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        self.residual = self.residual.max(r);
        if r > self.tol && self.offending.len() < MAX_REPORTED && !self.offending.contains(&at) {
            self.offending.push(at);
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            passed: self.residual <= self.tol,
            residual: self.residual,
            offending: self.offending,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} (residual {:.3e}, frames {:?})", c.name, c.residual, c.offending))
            .collect();
        if failed.is_empty() {
            "all checks passed".into()
        } else {
            failed.join("; ")
        }
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<20} {}  residual {:.3e}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.residual
            )?;
        }
        Ok(())
    }
}

/// Aggregate over a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub total: usize,
    pub passed: usize,
    /// `(demo index, failed checks)`.
    pub failures: Vec<(u64, String)>,
    /// Worst residual seen per check name.
    pub worst: Vec<(String, f64)>,
}

impl DatasetReport {
    pub fn add(&mut self, index: u64, report: &VerificationReport) {
        self.total += 1;
        if report.passed() {
            self.passed += 1;
        } else {
            self.failures.push((index, report.summary()));
        }
        for c in &report.checks {
            match self.worst.iter_mut().find(|(n, _)| *n == c.name) {
                Some((_, w)) => *w = w.max(c.residual),
                None => self.worst.push((c.name.clone(), c.residual)),
            }
        }
    }

    pub fn merge(mut self, other: DatasetReport) -> DatasetReport {
        self.total += other.total;
        self.passed += other.passed;
        self.failures.extend(other.failures);
        for (n, r) in other.worst {
            match self.worst.iter_mut().find(|(m, _)| *m == n) {
                Some((_, w)) => *w = w.max(r),
                None => self.worst.push((n, r)),
            }
        }
        self
    }

    pub fn pass_rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Largest absolute entry of the difference of two homogeneous matrices.
pub fn pose_residual(a: &Pose, b: &Pose) -> f64 {
    let r = (a.rotation - b.rotation).abs().max();
    let t = (a.translation - b.translation).abs().max();
    r.max(t)
}

fn step(a: &Pose, b: &Pose) -> f64 {
    (b.translation - a.translation).norm()
}

fn max_demo_step(demo: &StateActionTrajectory, arm: usize) -> f64 {
    demo.actions
        .windows(2)
        .map(|w| step(&w[0][arm].pose, &w[1][arm].pose))
        .fold(0.0, f64::max)
}

fn transition_count(actions: &[BimanualAction], arm: usize) -> usize {
    GraspEventLog::transitions(actions.iter().map(|a| a[arm].gripper)).len()
}

/// Runs every invariant over `aug`, built from `source`.
pub fn check_invariants(source: &PreparedDemo, aug: &AugmentedDemo, options: &VerifyOptions) -> VerificationReport {
    let demo = &source.trajectory;
    let out = &aug.trajectory;
    let prov = &aug.provenance;
    let len = out.len();
    let mut checks = Vec::new();

    // lengths and layout coverage
    let mut lengths = Check::new("length_equality", 0.0);
    if out.states_flat().len() != len * out.num_keypoints() {
        lengths.record(0, 1.0);
    }
    for (j, pieces) in prov.layout.iter().enumerate() {
        let mut next = 0;
        for p in pieces {
            if p.start != next || p.end < p.start {
                lengths.record(p.start, 1.0);
            }
            next = p.end + 1;
        }
        if next != len {
            lengths.record(j, (next as f64 - len as f64).abs());
        }
    }
    let layout_ok = lengths.residual == 0.0;
    checks.push(lengths.finish());

    // equivariance of skill frames
    let mut equi = Check::new("equivariance", CHECK_TOL);
    if layout_ok && prov.objects.len() == source.config.num_objects() {
        for (j, pieces) in prov.layout.iter().enumerate() {
            for p in pieces.iter().filter(|p| p.kind.is_skill()) {
                let src = p.source_start.unwrap_or(0);
                let (new_frame, old_frame) = if p.frame == 0 {
                    (Pose::identity(), Pose::identity())
                } else {
                    (prov.objects[p.frame - 1], *source.config.frame(p.frame))
                };
                let (ni, oi) = (new_frame.inverse(), old_frame.inverse());
                for t in p.start..=p.end {
                    let s = src + (t - p.start);
                    if s >= demo.len() {
                        equi.record(t, f64::INFINITY);
                        continue;
                    }
                    let got = ni.compose(out.pose(t, j));
                    let want = oi.compose(demo.pose(s, j));
                    equi.record(t, pose_residual(&got, &want));
                }
            }
        }
    } else {
        equi.record(0, f64::INFINITY);
    }
    checks.push(equi.finish());

    // synchronized segments keep the demo's inter-arm pose
    let mut sync = Check::new("sync_fidelity", CHECK_TOL);
    if layout_ok {
        for p0 in prov.layout[0].iter().filter(|p| p.kind == PieceKind::SkillSync) {
            let Some(p1) = prov.layout[1].iter().find(|p| p.kind == PieceKind::SkillSync && p.stage == p0.stage) else {
                sync.record(p0.stage, f64::INFINITY);
                continue;
            };
            if (p0.start, p0.end, p0.source_start) != (p1.start, p1.end, p1.source_start) {
                sync.record(p0.stage, f64::INFINITY);
                continue;
            }
            let src = p0.source_start.unwrap_or(0);
            for t in p0.start..=p0.end {
                let s = src + (t - p0.start);
                let got = out.pose(t, 0).between(out.pose(t, 1));
                let want = demo.pose(s, 0).between(demo.pose(s, 1));
                sync.record(t, pose_residual(&got, &want));
            }
        }
        let sync_stages = |j: usize| source.grounding.timeline.arms[j].iter().filter(|s| s.kind == SegmentKind::SkillSync).count();
        let found = prov.layout[0].iter().filter(|p| p.kind == PieceKind::SkillSync).count();
        if found != sync_stages(0) {
            sync.record(0, f64::INFINITY);
        }
    }
    checks.push(sync.finish());

    // per-step displacement
    let mut cont = Check::new("continuity", CHECK_TOL);
    let planned_bound = options.velocity * options.dt;
    if layout_ok {
        for j in 0..NUM_ARMS {
            let inherited = max_demo_step(demo, j);
            let loose = planned_bound.max(inherited);
            let tight = match options.steps {
                StepRule::Velocity => planned_bound,
                StepRule::DemoMatched => loose,
            };
            let mut kind_at = vec![PieceKind::Padding; len];
            for p in &prov.layout[j] {
                kind_at[p.start..=p.end].fill(p.kind);
            }
            for t in 1..len {
                let d = step(out.pose(t - 1, j), out.pose(t, j));
                let bound = if kind_at[t - 1].is_planned() && kind_at[t].is_planned() {
                    tight
                } else {
                    loose
                };
                cont.record(t, (d - bound).max(0.0));
            }
        }
    }
    checks.push(cont.finish());

    // keypoint rigidity per object
    let mut rigid = Check::new("rigidity", CHECK_TOL);
    for idx in &source.config.ownership {
        let pairs: Vec<(usize, usize, f64)> = idx
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| idx[a + 1..].iter().map(move |&k| (i, k)))
            .map(|(i, k)| (i, k, (out.state(0)[i] - out.state(0)[k]).norm()))
            .collect();
        for t in 0..len {
            let s = out.state(t);
            let worst = pairs
                .iter()
                .map(|&(i, k, d0)| ((s[i] - s[k]).norm() - d0).abs())
                .fold(0.0, f64::max);
            rigid.record(t, worst);
        }
    }
    checks.push(rigid.finish());

    // gripper transitions per arm
    let mut grip = Check::new("gripper_conservation", 0.0);
    for j in 0..NUM_ARMS {
        let a = transition_count(&out.actions, j);
        let b = transition_count(&demo.actions, j);
        grip.record(j, a.abs_diff(b) as f64);
    }
    checks.push(grip.finish());

    // finite, proper poses; objects inside the workspace
    let mut bounds = Check::new("bounds", CHECK_TOL);
    for t in 0..len {
        for j in 0..NUM_ARMS {
            let p = out.pose(t, j);
            let ortho = orthonormality_residual(&p.rotation);
            let det = (p.rotation.determinant() - 1.0).abs();
            let finite = p.translation.iter().all(|v| v.is_finite());
            bounds.record(t, if finite { ortho.max(det) } else { f64::INFINITY });
        }
        if !out.state(t).iter().all(|p| p.iter().all(|v| v.is_finite())) {
            bounds.record(t, f64::INFINITY);
        }
    }
    if let Some(ws) = &options.workspace {
        for (k, o) in prov.objects.iter().enumerate() {
            let x = o.translation;
            let outside = (0..3)
                .map(|i| (ws.min[i] - x[i]).max(x[i] - ws.max[i]).max(0.0))
                .fold(0.0, f64::max);
            bounds.record(k, outside);
        }
    }
    checks.push(bounds.finish());

    VerificationReport { checks }
}

/// Predicts keypoint states from actions and grasp events by rigid attachment.
pub fn keypoint_forward_model(
    actions: &[BimanualAction],
    events: &GraspEventLog,
    initial: &[Vec3],
    ownership: &[Vec<usize>],
) -> Result<Vec<Vec3>, AugmentError> {
    propagate_keypoints(actions, events, initial, ownership)
}

/// Result of [`replay`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    /// Keypoints after the last frame.
    pub final_state: Vec<Vec3>,
    /// `(frame, arm, object)` for every attachment that happened.
    pub attachments: Vec<(usize, usize, usize)>,
    pub success: bool,
}

/// Kinematic replay of the actions from the demo's first keypoint state.
///
/// A gripper closing within `grasp_eps` of an object's nearest keypoint picks
/// the object up; it then follows the EE rigidly until that gripper opens,
/// when it drops vertically onto the support height.
pub fn replay(traj: &StateActionTrajectory, task: &SyntheticTask, grasp_eps: f64) -> ReplayOutcome {
    let ownership: Vec<Vec<usize>> = (1..=task.num_objects()).map(|k| traj.keypoints_of(k)).collect();
    let mut current = traj.state(0).to_vec();
    let mut holder: Vec<Option<(usize, Pose, Vec<Vec3>)>> = vec![None; ownership.len()];
    let mut attachments = Vec::new();
    for t in 0..traj.len() {
        let action = &traj.actions[t];
        for (k, h) in holder.iter().enumerate() {
            if let Some((j, inv, at)) = h {
                let rel = action[*j].pose.compose(inv);
                for (&i, p) in ownership[k].iter().zip(at) {
                    current[i] = rel.apply(p);
                }
            }
        }
        if t == 0 {
            continue;
        }
        for j in 0..NUM_ARMS {
            let (was, now) = (traj.actions[t - 1][j].gripper, action[j].gripper);
            if was == now {
                continue;
            }
            let ee = action[j].pose.translation;
            if now.is_closed() {
                let nearest = ownership
                    .iter()
                    .enumerate()
                    .filter_map(|(k, idx)| {
                        idx.iter().map(|&i| (current[i] - ee).norm()).min_by(f64::total_cmp).map(|d| (k, d))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((k, d)) = nearest {
                    if d <= grasp_eps {
                        let at = ownership[k].iter().map(|&i| current[i]).collect();
                        holder[k] = Some((j, action[j].pose.inverse(), at));
                        attachments.push((t, j, k + 1));
                    }
                }
            } else {
                for k in 0..holder.len() {
                    if holder[k].as_ref().is_some_and(|h| h.0 == j) {
                        holder[k] = None;
                        let lowest = ownership[k].iter().map(|&i| current[i].z).fold(f64::INFINITY, f64::min);
                        let drop = lowest - task.support_height();
                        for &i in &ownership[k] {
                            current[i].z -= drop;
                        }
                    }
                }
            }
        }
    }
    let success = task.success(traj.state(0), &current);
    ReplayOutcome {
        final_state: current,
        attachments,
        success,
    }
}
