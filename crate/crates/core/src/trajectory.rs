//! Keypoint-state / bimanual-action trajectories and their JSON file form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

pub const NUM_ARMS: usize = 2;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no frames")]
    Empty,
    #[error("frame {frame}: expected {expected} keypoints, found {found}")]
    StateSize {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("frame {frame}: non-finite {what}")]
    NonFinite { frame: usize, what: &'static str },
    #[error("frame {frame}, arm {arm}: invalid pose: {source}")]
    InvalidPose {
        frame: usize,
        arm: usize,
        source: crate::geometry::GeometryError,
    },
    #[error("dt must be positive, got {0}")]
    BadDt(f64),
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

/// Open/closed gripper command. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Gripper {
    #[default]
    Open,
    Closed,
}

impl Gripper {
    pub fn from_closed(closed: bool) -> Self {
        if closed {
            Gripper::Closed
        } else {
            Gripper::Open
        }
    }

    pub fn is_closed(self) -> bool {
        self == Gripper::Closed
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Gripper::Open => 0.0,
            Gripper::Closed => 1.0,
        }
    }
}

impl Serialize for Gripper {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.is_closed() as u8)
    }
}

impl<'de> Deserialize<'de> for Gripper {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Gripper::Open),
            1 => Ok(Gripper::Closed),
            other => Err(serde::de::Error::custom(format!(
                "gripper must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// One arm's command for a single step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmAction {
    #[serde(flatten)]
    pub pose: Pose,
    pub gripper: Gripper,
}

impl ArmAction {
    pub fn new(pose: Pose, gripper: Gripper) -> Self {
        Self { pose, gripper }
    }
}

pub type BimanualAction = [ArmAction; NUM_ARMS];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointMeta {
    pub id: u32,
    pub label: String,
    pub group: u32,
    /// Owning object, 1-based.
    pub object: usize,
}

/// States (N keypoints in the task frame) and bimanual actions over `L` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionTrajectory {
    pub dt: f64,
    pub keypoints: Vec<KeypointMeta>,
    /// Row-major `L × N`.
    states: Vec<Vec3>,
    pub actions: Vec<BimanualAction>,
}

impl StateActionTrajectory {
    pub fn new(
        dt: f64,
        keypoints: Vec<KeypointMeta>,
        states: Vec<Vec3>,
        actions: Vec<BimanualAction>,
    ) -> Result<Self, TrajectoryError> {
        let traj = Self {
            dt,
            keypoints,
            states,
            actions,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TrajectoryError::BadDt(self.dt));
        }
        let len = self.actions.len();
        if len == 0 {
            return Err(TrajectoryError::Empty);
        }
        let n = self.keypoints.len();
        if self.states.len() != len * n {
            let found = if len > 0 { self.states.len() / len } else { 0 };
            return Err(TrajectoryError::StateSize {
                frame: 0,
                expected: n,
                found,
            });
        }
        for t in 0..len {
            if !self.state(t).iter().all(|p| p.iter().all(|v| v.is_finite())) {
                return Err(TrajectoryError::NonFinite {
                    frame: t,
                    what: "keypoint",
                });
            }
            for (arm, a) in self.actions[t].iter().enumerate() {
                a.pose
                    .validate(1e-6)
                    .map_err(|source| TrajectoryError::InvalidPose {
                        frame: t,
                        arm,
                        source,
                    })?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoints.len()
    }

    pub fn state(&self, t: usize) -> &[Vec3] {
        let n = self.keypoints.len();
        &self.states[t * n..(t + 1) * n]
    }

    pub fn state_mut(&mut self, t: usize) -> &mut [Vec3] {
        let n = self.keypoints.len();
        &mut self.states[t * n..(t + 1) * n]
    }

    pub fn states_flat(&self) -> &[Vec3] {
        &self.states
    }

    pub fn pose(&self, t: usize, arm: usize) -> &Pose {
        &self.actions[t][arm].pose
    }

    pub fn gripper(&self, t: usize, arm: usize) -> Gripper {
        self.actions[t][arm].gripper
    }

    pub fn arm_poses(&self, arm: usize) -> impl Iterator<Item = &Pose> + '_ {
        self.actions.iter().map(move |a| &a[arm].pose)
    }

    /// Keypoint indices owned by object `k` (1-based).
    pub fn keypoints_of(&self, object: usize) -> Vec<usize> {
        self.keypoints
            .iter()
            .enumerate()
            .filter(|(_, m)| m.object == object)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_objects(&self) -> usize {
        self.keypoints.iter().map(|m| m.object).max().unwrap_or(0)
    }

    pub fn load(path: &Path) -> Result<Self, TrajectoryError> {
        let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            TrajectoryError::Json { source, .. } => TrajectoryError::Json {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        let file: TrajectoryFile =
            serde_json::from_str(text).map_err(|source| TrajectoryError::Json {
                path: String::new(),
                source,
            })?;
        file.into_trajectory()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TrajectoryFile::from(self)).expect("trajectory serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), TrajectoryError> {
        fs::write(path, self.to_json()).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    state: Vec<[f64; 3]>,
    arms: [ArmAction; NUM_ARMS],
}

/// On-disk layout of `traj.json`.
#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    dt: f64,
    keypoints: Vec<KeypointMeta>,
    frames: Vec<FrameRecord>,
}

impl From<&StateActionTrajectory> for TrajectoryFile {
    fn from(t: &StateActionTrajectory) -> Self {
        let frames = (0..t.len())
            .map(|i| FrameRecord {
                state: t.state(i).iter().map(|p| [p.x, p.y, p.z]).collect(),
                arms: t.actions[i],
            })
            .collect();
        TrajectoryFile {
            dt: t.dt,
            keypoints: t.keypoints.clone(),
            frames,
        }
    }
}

impl TrajectoryFile {
    fn into_trajectory(self) -> Result<StateActionTrajectory, TrajectoryError> {
        let n = self.keypoints.len();
        let mut states = Vec::with_capacity(self.frames.len() * n);
        let mut actions = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.into_iter().enumerate() {
            if f.state.len() != n {
                return Err(TrajectoryError::StateSize {
                    frame: i,
                    expected: n,
                    found: f.state.len(),
                });
            }
            states.extend(f.state.iter().map(|p| Vec3::from(*p)));
            actions.push(f.arms);
        }
        StateActionTrajectory::new(self.dt, self.keypoints, states, actions)
    }
}
