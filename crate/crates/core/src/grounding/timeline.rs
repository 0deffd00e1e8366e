//! Stage-wise segmentation of a demo into motion, skill and idle intervals.

use serde::{Deserialize, Serialize};

use crate::trajectory::{Gripper, StateActionTrajectory, NUM_ARMS};

use super::objects::ObjectConfiguration;
use super::template::TaskTemplate;
use super::GroundingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Motion,
    SkillAsync,
    SkillSync,
    Idle,
}

impl SegmentKind {
    pub fn is_skill(self) -> bool {
        matches!(self, SegmentKind::SkillAsync | SegmentKind::SkillSync)
    }
}

/// Closed frame interval `[start, end]` of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub stage: usize,
    pub start: usize,
    pub end: usize,
    /// `0` for the task frame, otherwise the 1-based object index.
    pub frame: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTimeline {
    pub arms: [Vec<Segment>; NUM_ARMS],
}

impl SegmentTimeline {
    pub fn segment_at(&self, arm: usize, t: usize) -> Option<&Segment> {
        self.arms[arm].iter().find(|s| s.contains(t))
    }

    /// Checks that each arm's segments partition `[0, len)` and that
    /// synchronized segments coincide across arms.
    pub fn validate(&self, len: usize) -> Result<(), String> {
        for (j, segs) in self.arms.iter().enumerate() {
            let mut next = 0;
            for s in segs {
                if s.start != next || s.end < s.start {
                    return Err(format!("arm {j}: segment {}..={} does not continue at {next}", s.start, s.end));
                }
                next = s.end + 1;
            }
            if next != len {
                return Err(format!("arm {j}: segments cover [0, {next}) instead of [0, {len})"));
            }
        }
        let sync = |j: usize| -> Vec<(usize, usize, usize)> {
            self.arms[j]
                .iter()
                .filter(|s| s.kind == SegmentKind::SkillSync)
                .map(|s| (s.stage, s.start, s.end))
                .collect()
        };
        if sync(0) != sync(1) {
            return Err("synchronized segments differ between arms".into());
        }
        Ok(())
    }

    pub fn swap_arms(&self) -> SegmentTimeline {
        SegmentTimeline {
            arms: [self.arms[1].clone(), self.arms[0].clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Grasp,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspEvent {
    /// First frame with the new gripper state.
    pub t: usize,
    pub kind: EventKind,
    /// Object held from this grasp until the next release.
    pub object: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspEventLog {
    pub arms: [Vec<GraspEvent>; NUM_ARMS],
}

impl GraspEventLog {
    /// Transitions of one gripper stream, without attachments.
    pub fn transitions(grippers: impl IntoIterator<Item = Gripper>) -> Vec<(usize, EventKind)> {
        let mut out = Vec::new();
        let mut prev: Option<Gripper> = None;
        for (t, g) in grippers.into_iter().enumerate() {
            if let Some(p) = prev {
                if p != g {
                    out.push((t, if g.is_closed() { EventKind::Grasp } else { EventKind::Release }));
                }
            }
            prev = Some(g);
        }
        out
    }

    /// Attachment tag: releases carry the object of the grasp they end.
    pub fn attach(events: &[(usize, EventKind)], mut grasped: impl FnMut(usize) -> Option<usize>) -> Vec<GraspEvent> {
        let mut held = None;
        events
            .iter()
            .map(|&(t, kind)| {
                let object = match kind {
                    EventKind::Grasp => {
                        held = grasped(t);
                        held
                    }
                    EventKind::Release => held.take(),
                };
                GraspEvent { t, kind, object }
            })
            .collect()
    }

    pub fn alternates(&self) -> bool {
        self.arms
            .iter()
            .all(|ev| ev.windows(2).all(|w| w[0].kind != w[1].kind && w[0].t < w[1].t))
    }

    pub fn swap_arms(&self) -> GraspEventLog {
        GraspEventLog {
            arms: [self.arms[1].clone(), self.arms[0].clone()],
        }
    }
}

/// Proximity thresholds, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub eps_skill: f64,
    pub eps_sync: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            eps_skill: 0.10,
            eps_sync: 0.30,
        }
    }
}

/// Timeline plus grasp events of one demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub timeline: SegmentTimeline,
    pub events: GraspEventLog,
}

/// Earliest maximal run of `pred` in `[from, len)`.
fn first_run(from: usize, len: usize, pred: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
    let a = (from..len).find(|&t| pred(t))?;
    let b = (a..len).take_while(|&t| pred(t)).last().unwrap_or(a);
    Some((a, b))
}

fn push_gap(segs: &mut Vec<Segment>, kind: SegmentKind, stage: usize, from: usize, to_excl: usize, frame: usize) {
    if from < to_excl {
        segs.push(Segment {
            kind,
            stage,
            start: from,
            end: to_excl - 1,
            frame,
        });
    }
}

/// Splits `traj` into per-arm segments following the template stage order.
pub fn ground_segments(
    traj: &StateActionTrajectory,
    template: &TaskTemplate,
    config: &ObjectConfiguration,
    grounding: &GroundingConfig,
) -> Result<Grounding, GroundingError> {
    template.ensure_valid()?;
    if !(grounding.eps_skill > 0.0 && grounding.eps_sync > 0.0) {
        return Err(GroundingError::InvalidThreshold {
            eps_skill: grounding.eps_skill,
            eps_sync: grounding.eps_sync,
        });
    }
    config.check_against(template.num_objects, traj.num_keypoints())?;
    let len = traj.len();
    let pos = |j: usize, t: usize| traj.actions[t][j].pose.translation;
    let grip = |j: usize, t: usize| traj.actions[t][j].gripper;

    let mut cursor = [0usize; NUM_ARMS];
    let mut arms: [Vec<Segment>; NUM_ARMS] = [Vec::new(), Vec::new()];

    for (i, stage) in template.stages.iter().enumerate() {
        if stage.sync {
            let action = &stage.actions[0];
            let from = cursor[0].max(cursor[1]);
            let near = |t: usize| (pos(0, t) - pos(1, t)).norm() < grounding.eps_sync;
            let (a, b) = first_run(from, len, near).ok_or(GroundingError::NoSkillSegment { stage: i, arm: None })?;
            if a == from && from > cursor[0].min(cursor[1]) && near(from - 1) {
                return Err(GroundingError::NonMonotoneStages {
                    stage: i,
                    detail: format!("synchronized contact already holds at frame {}", from - 1),
                });
            }
            for j in 0..NUM_ARMS {
                push_gap(&mut arms[j], SegmentKind::Motion, i, cursor[j], a, action.reference);
                arms[j].push(Segment {
                    kind: SegmentKind::SkillSync,
                    stage: i,
                    start: a,
                    end: b,
                    frame: action.reference,
                });
                cursor[j] = b + 1;
            }
            continue;
        }

        let mut stage_end = None;
        for action in &stage.actions {
            let j = action.arm.expect("validated async action has an arm");
            let from = cursor[j];
            let run = if action.reference == 0 {
                let event = (from.max(1)..len).find(|&t| grip(j, t) != grip(j, t - 1));
                match event {
                    Some(e) => {
                        let anchor = pos(j, e);
                        let inside = |t: usize| (pos(j, t) - anchor).norm() < grounding.eps_skill;
                        let a = (from..=e).rev().take_while(|&t| inside(t)).last().unwrap_or(e);
                        let b = (e..len).take_while(|&t| inside(t)).last().unwrap_or(e);
                        Some((a, b))
                    }
                    None if from < len => Some((from, len - 1)),
                    None => None,
                }
            } else {
                let center = config.frame(action.reference).translation;
                let near = |t: usize| (pos(j, t) - center).norm() < grounding.eps_skill;
                let run = first_run(from, len, near);
                if let Some((a, _)) = run {
                    let prev_skill = arms[j].last().is_some_and(|s| s.kind.is_skill());
                    if a == from && from > 0 && prev_skill && near(from - 1) {
                        return Err(GroundingError::NonMonotoneStages {
                            stage: i,
                            detail: format!("arm {j} is already at object {} when the previous stage ends", action.reference),
                        });
                    }
                }
                run
            };
            let (a, b) = run.ok_or(GroundingError::NoSkillSegment { stage: i, arm: Some(j) })?;
            push_gap(&mut arms[j], SegmentKind::Motion, i, from, a, action.reference);
            arms[j].push(Segment {
                kind: SegmentKind::SkillAsync,
                stage: i,
                start: a,
                end: b,
                frame: action.reference,
            });
            cursor[j] = b + 1;
            stage_end = stage_end.max(Some(b));
        }
        if let Some(end) = stage_end {
            for j in 0..NUM_ARMS {
                if stage.action_for(j).is_none() {
                    push_gap(&mut arms[j], SegmentKind::Idle, i, cursor[j], end + 1, 0);
                    cursor[j] = cursor[j].max(end + 1);
                }
            }
        }
    }
    let last = template.stages.len() - 1;
    for j in 0..NUM_ARMS {
        push_gap(&mut arms[j], SegmentKind::Idle, last, cursor[j], len, 0);
    }
    let timeline = SegmentTimeline { arms };
    debug_assert_eq!(timeline.validate(len), Ok(()));

    let events = GraspEventLog {
        arms: std::array::from_fn(|j| {
            let tr = GraspEventLog::transitions((0..len).map(|t| grip(j, t)));
            GraspEventLog::attach(&tr, |t| {
                let seg = timeline.arms[j]
                    .iter()
                    .filter(|s| s.kind.is_skill())
                    .min_by_key(|s| if s.contains(t) { 0 } else if t < s.start { s.start - t } else { t - s.end })?;
                template.stages[seg.stage].action_for(j)?.grasped_object(j)
            })
        }),
    };
    Ok(Grounding { timeline, events })
}
