//! Spatial augmentation of a grounded demo: skill transforms, motion
//! replanning, resynchronization and rigid keypoint propagation.

mod planner;
mod propagate;
mod sampler;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Plane, Pose, Vec3};
use crate::grounding::{
    ground_segments, mirror_template_inputs, GraspEventLog, Grounding, GroundingConfig, GroundingError,
    ObjectConfiguration, SegmentKind, TaskTemplate,
};
use crate::trajectory::{ArmAction, BimanualAction, StateActionTrajectory, TrajectoryError, NUM_ARMS};
use crate::verify::{check_invariants, VerifyOptions};

pub use planner::{
    check_plan, motion_steps, plan_frames, plan_motion_segment, ExternalProcessPlanner, LinearPlanner, MotionPlanner,
    ENDPOINT_TOL,
};
pub use propagate::{augmented_events, propagate_keypoints};
pub use sampler::{rng_for, sample_configuration, AugmentationSpec, ConfigurationSample, ObjectSampler};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
    #[error("no valid configuration after {attempts} attempts: {reason}")]
    UnsatisfiableSpec { attempts: usize, reason: String },
    #[error("planner failure: {0}")]
    PlannerFailure(String),
    #[error("object {object} is grasped but owns no keypoints")]
    UnownedKeypoints { object: usize },
    #[error("arm {arm}, stage {stage}, {kind:?} segment: {source}")]
    Segment {
        arm: usize,
        stage: usize,
        kind: PieceKind,
        source: Box<AugmentError>,
    },
    #[error("inputs disagree: {0}")]
    Inconsistent(String),
    #[error("the mirrored demo could not be grounded: {0}")]
    MirrorUnavailable(String),
    #[error("{failed} of {count} samples failed (budget 10%); first: {first}")]
    FailureBudget { failed: usize, count: usize, first: String },
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
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

/// How many frames a motion segment gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `max(1, ⌈d / (v·dt)⌉)`.
    #[default]
    Velocity,
    /// As many frames as the demo spent in that segment.
    DemoMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub velocity: f64,
    pub dt: f64,
    pub steps: StepRule,
}

impl AugmentOptions {
    pub fn from_spec(spec: &AugmentationSpec) -> Self {
        Self {
            velocity: spec.velocity,
            dt: spec.dt,
            steps: StepRule::Velocity,
        }
    }

    /// Largest planned per-step displacement.
    pub fn step_bound(&self) -> f64 {
        self.velocity * self.dt
    }
}

/// Origin of a stretch of augmented frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceKind {
    Motion,
    SkillAsync,
    SkillSync,
    Idle,
    /// Planned link between two transformed segments that would otherwise jump.
    Bridge,
    /// Repeated frames inserted to resynchronize the arms.
    Padding,
}

impl From<SegmentKind> for PieceKind {
    fn from(k: SegmentKind) -> Self {
        match k {
            SegmentKind::Motion => PieceKind::Motion,
            SegmentKind::SkillAsync => PieceKind::SkillAsync,
            SegmentKind::SkillSync => PieceKind::SkillSync,
            SegmentKind::Idle => PieceKind::Idle,
        }
    }
}

impl PieceKind {
    pub fn is_skill(self) -> bool {
        matches!(self, PieceKind::SkillAsync | PieceKind::SkillSync)
    }

    pub fn is_planned(self) -> bool {
        matches!(self, PieceKind::Motion | PieceKind::Bridge)
    }
}

/// Augmented frames `[start, end]` of one arm and where they came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub kind: PieceKind,
    pub stage: usize,
    pub start: usize,
    pub end: usize,
    /// Demo frame of `start` for skill and idle pieces.
    pub source_start: Option<usize>,
    /// Reference frame: `0` task frame, otherwise 1-based object.
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub index: u64,
    pub seed: u64,
    /// Final object frames.
    pub objects: Vec<Pose>,
    /// World-frame object motions applied to the (possibly mirrored) source.
    pub deltas: Vec<Pose>,
    pub mirrored: bool,
    /// Resynchronization frames added per arm.
    pub padding: [usize; NUM_ARMS],
    pub layout: [Vec<Piece>; NUM_ARMS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDemo {
    pub trajectory: StateActionTrajectory,
    pub events: GraspEventLog,
    pub provenance: Provenance,
}

/// A demo with its template, object frames and grounding.
#[derive(Debug, Clone)]
pub struct PreparedDemo {
    pub trajectory: StateActionTrajectory,
    pub template: TaskTemplate,
    pub config: ObjectConfiguration,
    pub grounding: Grounding,
}

impl PreparedDemo {
    pub fn new(
        trajectory: StateActionTrajectory,
        template: TaskTemplate,
        config: ObjectConfiguration,
        thresholds: &GroundingConfig,
    ) -> Result<Self, AugmentError> {
        let grounding = ground_segments(&trajectory, &template, &config, thresholds)?;
        Ok(Self {
            trajectory,
            template,
            config,
            grounding,
        })
    }
}

/// The demo plus its mirror image, ready for sampling.
#[derive(Debug, Clone)]
pub struct AugmentationSource {
    pub original: PreparedDemo,
    pub mirrored: Result<PreparedDemo, String>,
    pub plane: Plane,
}

impl AugmentationSource {
    pub fn new(
        trajectory: StateActionTrajectory,
        template: TaskTemplate,
        config: ObjectConfiguration,
        thresholds: &GroundingConfig,
        plane: Plane,
    ) -> Result<Self, AugmentError> {
        let (mt, mc, mtpl) = mirror_template_inputs(&trajectory, &config, &template, &plane);
        let original = PreparedDemo::new(trajectory, template, config, thresholds)?;
        let mirrored = PreparedDemo::new(mt, mtpl, mc, thresholds).map_err(|e| {
            log::warn!("mirrored demo unavailable: {e}");
            e.to_string()
        });
        Ok(Self {
            original,
            mirrored,
            plane,
        })
    }

    pub fn prepared(&self, mirrored: bool) -> Result<&PreparedDemo, AugmentError> {
        if mirrored {
            self.mirrored.as_ref().map_err(|e| AugmentError::MirrorUnavailable(e.clone()))
        } else {
            Ok(&self.original)
        }
    }
}

/// Applies the world-frame object motion `delta` to every skill pose, so the
/// EE keeps its demo pose relative to the moved object.
pub fn augment_skill_segment(actions: &[ArmAction], delta: &Pose) -> Vec<ArmAction> {
    actions
        .iter()
        .map(|a| ArmAction::new(delta.compose(&a.pose), a.gripper))
        .collect()
}

/// Pads the shorter stream by repeating its last action. Returns the number
/// of frames added per arm.
pub fn resynchronize(streams: &mut [Vec<ArmAction>; NUM_ARMS]) -> [usize; NUM_ARMS] {
    let target = streams.iter().map(Vec::len).max().unwrap_or(0);
    let mut added = [0; NUM_ARMS];
    for (j, s) in streams.iter_mut().enumerate() {
        if let Some(&last) = s.last() {
            added[j] = target - s.len();
            s.resize(target, last);
        }
    }
    added
}

struct ArmBuilder<'a> {
    arm: usize,
    demo: &'a StateActionTrajectory,
    out: Vec<ArmAction>,
    pieces: Vec<Piece>,
}

impl ArmBuilder<'_> {
    fn push(&mut self, kind: PieceKind, stage: usize, frame: usize, source_start: Option<usize>, frames: Vec<ArmAction>) {
        if frames.is_empty() {
            return;
        }
        let start = self.out.len();
        self.out.extend(frames);
        self.pieces.push(Piece {
            kind,
            stage,
            start,
            end: self.out.len() - 1,
            source_start,
            frame,
        });
    }

    fn last(&self) -> Option<ArmAction> {
        self.out.last().copied()
    }

    fn demo(&self, t: usize) -> ArmAction {
        self.demo.actions[t][self.arm]
    }
}

fn delta_for(deltas: &[Pose], frame: usize) -> Pose {
    if frame == 0 {
        Pose::identity()
    } else {
        deltas[frame - 1]
    }
}

/// Builds one augmented demo from a prepared source and per-object motions.
pub fn augment_demo(
    source: &PreparedDemo,
    deltas: &[Pose],
    options: &AugmentOptions,
    planner: &dyn MotionPlanner,
) -> Result<AugmentedDemo, AugmentError> {
    let demo = &source.trajectory;
    let timeline = &source.grounding.timeline;
    if deltas.len() != source.config.num_objects() {
        return Err(AugmentError::Inconsistent(format!(
            "{} deltas for {} objects",
            deltas.len(),
            source.config.num_objects()
        )));
    }
    timeline.validate(demo.len()).map_err(AugmentError::Inconsistent)?;
    if !(options.velocity > 0.0 && options.dt > 0.0) {
        return Err(AugmentError::InvalidSpec(format!(
            "velocity and dt must be positive (v={}, dt={})",
            options.velocity, options.dt
        )));
    }
    let bound = options.step_bound();
    let mut arms: [ArmBuilder; NUM_ARMS] = std::array::from_fn(|arm| ArmBuilder {
        arm,
        demo,
        out: Vec::with_capacity(demo.len()),
        pieces: Vec::new(),
    });
    let mut next = [0usize; NUM_ARMS];
    let mut padding = [0usize; NUM_ARMS];

    loop {
        for b in arms.iter_mut() {
            let segs = &timeline.arms[b.arm];
            while let Some(seg) = segs.get(next[b.arm]) {
                if seg.kind == SegmentKind::SkillSync {
                    break;
                }
                let arm = b.arm;
                let wrap = |e: AugmentError| AugmentError::Segment {
                    arm,
                    stage: seg.stage,
                    kind: seg.kind.into(),
                    source: Box::new(e),
                };
                match seg.kind {
                    SegmentKind::Motion => {
                        let goal = match segs.get(next[b.arm] + 1) {
                            Some(n) if n.kind.is_skill() => delta_for(deltas, n.frame).compose(&b.demo(n.start).pose),
                            _ => b.demo((seg.end + 1).min(demo.len() - 1)).pose,
                        };
                        let (start, include_start) = match b.last() {
                            Some(a) => (a.pose, false),
                            None => (b.demo(0).pose, true),
                        };
                        let steps = match options.steps {
                            StepRule::Velocity => motion_steps(&start, &goal, options.velocity, options.dt),
                            StepRule::DemoMatched => seg.len(),
                        };
                        let frames =
                            plan_frames(&start, &goal, b.demo(seg.start).gripper, steps, include_start, planner).map_err(wrap)?;
                        b.push(PieceKind::Motion, seg.stage, seg.frame, None, frames);
                    }
                    SegmentKind::Idle => {
                        let hold = b.last().unwrap_or_else(|| b.demo(seg.start));
                        b.push(PieceKind::Idle, seg.stage, 0, Some(seg.start), vec![hold; seg.len()]);
                    }
                    SegmentKind::SkillAsync => {
                        push_skill(b, seg.kind, seg.stage, seg.frame, seg.start, seg.end, deltas, bound, planner).map_err(wrap)?;
                    }
                    SegmentKind::SkillSync => unreachable!(),
                }
                next[b.arm] += 1;
            }
        }
        let pending: [Option<_>; NUM_ARMS] = std::array::from_fn(|j| timeline.arms[j].get(next[j]).copied());
        match pending {
            [None, None] => break,
            [Some(s0), Some(s1)] if s0 == s1 => {
                let mut streams = [std::mem::take(&mut arms[0].out), std::mem::take(&mut arms[1].out)];
                let added = resynchronize(&mut streams);
                for (j, b) in arms.iter_mut().enumerate() {
                    let pad_from = streams[j].len() - added[j];
                    b.out = std::mem::take(&mut streams[j]);
                    if added[j] > 0 {
                        b.pieces.push(Piece {
                            kind: PieceKind::Padding,
                            stage: s0.stage,
                            start: pad_from,
                            end: b.out.len() - 1,
                            source_start: None,
                            frame: 0,
                        });
                    }
                    padding[j] += added[j];
                }
                for b in arms.iter_mut() {
                    push_skill(b, s0.kind, s0.stage, s0.frame, s0.start, s0.end, deltas, bound, planner).map_err(|e| {
                        AugmentError::Segment {
                            arm: b.arm,
                            stage: s0.stage,
                            kind: PieceKind::SkillSync,
                            source: Box::new(e),
                        }
                    })?;
                    next[b.arm] += 1;
                }
            }
            other => {
                return Err(AugmentError::Inconsistent(format!(
                    "synchronized segments do not line up across arms: {other:?}"
                )))
            }
        }
    }

    let mut streams = [std::mem::take(&mut arms[0].out), std::mem::take(&mut arms[1].out)];
    let added = resynchronize(&mut streams);
    let last_stage = source.template.stages.len().saturating_sub(1);
    for (j, b) in arms.iter_mut().enumerate() {
        if added[j] > 0 {
            b.pieces.push(Piece {
                kind: PieceKind::Padding,
                stage: last_stage,
                start: streams[j].len() - added[j],
                end: streams[j].len() - 1,
                source_start: None,
                frame: 0,
            });
        }
        padding[j] += added[j];
    }
    let [s0, s1] = streams;
    let actions: Vec<BimanualAction> = s0.into_iter().zip(s1).map(|(a, b)| [a, b]).collect();

    let events = augmented_events(&actions, &source.grounding.events);
    let mut initial: Vec<Vec3> = demo.state(0).to_vec();
    for (k, idx) in source.config.ownership.iter().enumerate() {
        for &i in idx {
            initial[i] = deltas[k].apply(&initial[i]);
        }
    }
    let states = propagate_keypoints(&actions, &events, &initial, &source.config.ownership)?;
    let trajectory = StateActionTrajectory::new(demo.dt, demo.keypoints.clone(), states, actions)?;
    let objects = deltas.iter().zip(&source.config.frames).map(|(d, f)| d.compose(f)).collect();
    let [l0, l1] = arms.map(|b| b.pieces);
    Ok(AugmentedDemo {
        trajectory,
        events,
        provenance: Provenance {
            index: 0,
            seed: 0,
            objects,
            deltas: deltas.to_vec(),
            mirrored: false,
            padding,
            layout: [l0, l1],
        },
    })
}

/// Emits a transformed skill segment, preceded by a bridge when the jump from
/// the previous frame exceeds both the planner bound and the demo's own step.
#[allow(clippy::too_many_arguments)]
fn push_skill(
    b: &mut ArmBuilder,
    kind: SegmentKind,
    stage: usize,
    frame: usize,
    start: usize,
    end: usize,
    deltas: &[Pose],
    bound: f64,
    planner: &dyn MotionPlanner,
) -> Result<(), AugmentError> {
    let delta = delta_for(deltas, frame);
    let demo_frames: Vec<ArmAction> = (start..=end).map(|t| b.demo(t)).collect();
    let frames = augment_skill_segment(&demo_frames, &delta);
    if let (Some(prev), Some(last_piece)) = (b.last(), b.pieces.last()) {
        if !last_piece.kind.is_planned() {
            let jump = (frames[0].pose.translation - prev.pose.translation).norm();
            let demo_step = if start > 0 {
                (b.demo(start).pose.translation - b.demo(start - 1).pose.translation).norm()
            } else {
                0.0
            };
            if jump > bound.max(demo_step) + 1e-9 {
                let steps = ((jump / bound).ceil() as usize).saturating_sub(1).max(1);
                let bridge = plan_frames(&prev.pose, &frames[0].pose, prev.gripper, steps, false, planner)?;
                b.push(PieceKind::Bridge, stage, frame, None, bridge);
            }
        }
    }
    b.push(kind.into(), stage, frame, Some(start), frames);
    Ok(())
}

/// Samples a configuration for `index` and augments the matching source.
pub fn augment_index(
    source: &AugmentationSource,
    spec: &AugmentationSpec,
    options: &AugmentOptions,
    planner: &dyn MotionPlanner,
    index: u64,
) -> Result<AugmentedDemo, AugmentError> {
    let mut rng = rng_for(spec.seed, index);
    let sample = sample_configuration(spec, &source.original.config, &source.original.template, &mut rng)?;
    let prepared = source.prepared(sample.use_mirror)?;
    let deltas: Vec<Pose> = sample
        .objects
        .iter()
        .zip(&prepared.config.frames)
        .map(|(o, f)| o.compose(&f.inverse()))
        .collect();
    let mut demo = augment_demo(prepared, &deltas, options, planner)?;
    demo.provenance.index = index;
    demo.provenance.seed = spec.seed;
    demo.provenance.mirrored = sample.use_mirror;
    Ok(demo)
}

/// Re-creates a demo from its recorded provenance.
pub fn regenerate(
    source: &AugmentationSource,
    provenance: &Provenance,
    options: &AugmentOptions,
    planner: &dyn MotionPlanner,
) -> Result<AugmentedDemo, AugmentError> {
    let prepared = source.prepared(provenance.mirrored)?;
    let mut demo = augment_demo(prepared, &provenance.deltas, options, planner)?;
    demo.provenance.index = provenance.index;
    demo.provenance.seed = provenance.seed;
    demo.provenance.mirrored = provenance.mirrored;
    Ok(demo)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub index: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct GenerationReport {
    /// Successful samples in index order.
    pub demos: Vec<AugmentedDemo>,
    pub failures: Vec<SampleFailure>,
}

/// `spec.count` augmentations, each checked with the invariant suite.
/// Output does not depend on the number of worker threads.
pub fn generate_dataset(
    source: &AugmentationSource,
    spec: &AugmentationSpec,
    options: &AugmentOptions,
    planner: &dyn MotionPlanner,
) -> Result<GenerationReport, AugmentError> {
    spec.validate(source.original.config.num_objects())?;
    let results: Vec<Result<AugmentedDemo, String>> = (0..spec.count as u64)
        .into_par_iter()
        .map(|i| {
            let demo = augment_index(source, spec, options, planner, i).map_err(|e| e.to_string())?;
            let prepared = source.prepared(demo.provenance.mirrored).map_err(|e| e.to_string())?;
            let verify = VerifyOptions {
                workspace: Some(spec.workspace),
                ..VerifyOptions::from(options)
            };
            let report = check_invariants(prepared, &demo, &verify);
            if report.passed() {
                Ok(demo)
            } else {
                Err(format!("invariants violated: {}", report.summary()))
            }
        })
        .collect();
    let mut demos = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => demos.push(d),
            Err(reason) => {
                log::warn!("sample {i} skipped: {reason}");
                failures.push(SampleFailure { index: i as u64, reason });
            }
        }
    }
    if failures.len() * 10 > spec.count {
        return Err(AugmentError::FailureBudget {
            failed: failures.len(),
            count: spec.count,
            first: failures[0].reason.clone(),
        });
    }
    Ok(GenerationReport { demos, failures })
}
