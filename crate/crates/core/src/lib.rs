//! Simulation-free augmentation of bimanual keypoint-action demonstrations.
//!
//! The pipeline turns one parsed demonstration plus a symbolic task template
//! into many spatially re-arranged demonstrations:
//!
//! 1. [`parse`] lifts tracked keypoints and hand landmarks into a
//!    [`StateActionTrajectory`] in the task frame.
//! 2. [`grounding`] splits the trajectory into per-arm motion, skill and idle
//!    segments following a [`TaskTemplate`].
//! 3. [`augment`] moves objects, transforms skill segments with them, replans
//!    motion segments, resynchronizes the arms and propagates keypoints.
//! 4. [`dataset`] writes fixed-rate training shards; [`verify`] checks every
//!    generated trajectory and replays it kinematically.

pub mod augment;
pub mod dataset;
pub mod geometry;
pub mod grounding;
pub mod parse;
pub mod synthetic;
pub mod trajectory;
pub mod verify;
pub mod workspace;

pub use geometry::{Plane, Pose, Vec3};
pub use grounding::{GraspEventLog, ObjectConfiguration, SegmentTimeline, TaskTemplate};
pub use trajectory::{ArmAction, BimanualAction, Gripper, KeypointMeta, StateActionTrajectory, NUM_ARMS};
