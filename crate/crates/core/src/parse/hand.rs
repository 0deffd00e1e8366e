//! Hand landmarks to end-effector commands.

use crate::geometry::{Mat3, Pose, Vec3, EPS_VEC};
use crate::trajectory::Gripper;

use super::ParseError;

pub const NUM_LANDMARKS: usize = 21;
pub const WRIST: usize = 0;
pub const THUMB_TIP: usize = 4;
pub const INDEX_TIP: usize = 8;

/// 21 hand landmarks in the task frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandFrame {
    pub landmarks: [Vec3; NUM_LANDMARKS],
}

impl HandFrame {
    pub fn index_tip(&self) -> &Vec3 {
        &self.landmarks[INDEX_TIP]
    }

    pub fn thumb_tip(&self) -> &Vec3 {
        &self.landmarks[THUMB_TIP]
    }

    pub fn wrist(&self) -> &Vec3 {
        &self.landmarks[WRIST]
    }

    pub fn pinch_distance(&self) -> f64 {
        (self.index_tip() - self.thumb_tip()).norm()
    }
}

/// Gripper frame from the thumb, index and wrist landmarks.
///
/// Translation is the thumb–index midpoint. The third rotation column is the
/// approach direction (wrist → midpoint), the second is the thumb → index
/// closing direction made orthogonal to it, and the first completes a
/// right-handed frame.
pub fn hand_to_ee(hand: &HandFrame) -> Result<Pose, ParseError> {
    let (th, ind, wr) = (hand.thumb_tip(), hand.index_tip(), hand.wrist());
    let midpoint = (th + ind) / 2.0;
    let closing = ind - th;
    let approach = midpoint - wr;
    if closing.norm() <= EPS_VEC {
        return Err(ParseError::DegenerateHand {
            arm: None,
            frame: None,
            reason: "thumb and index tips coincide",
        });
    }
    if approach.norm() <= EPS_VEC {
        return Err(ParseError::DegenerateHand {
            arm: None,
            frame: None,
            reason: "wrist coincides with the pinch midpoint",
        });
    }
    let z = approach.normalize();
    let y = closing - z * closing.dot(&z);
    if y.norm() <= EPS_VEC {
        return Err(ParseError::DegenerateHand {
            arm: None,
            frame: None,
            reason: "closing direction parallel to approach",
        });
    }
    let y = y.normalize();
    let x = y.cross(&z);
    let rotation = Mat3::from_columns(&[x, y, z]);
    Ok(Pose::from_parts(rotation, midpoint))
}

/// Hysteresis on the thumb–index distance. Starts open; closes strictly below
/// `close_thresh`, opens strictly above `open_thresh`. Frames with no
/// measurement keep the previous value.
pub fn gripper_signal(
    distances: &[Option<f64>],
    close_thresh: f64,
    open_thresh: f64,
) -> Result<Vec<Gripper>, ParseError> {
    if !(close_thresh > 0.0 && open_thresh > close_thresh) {
        return Err(ParseError::InvalidConfig(format!(
            "gripper thresholds need open > close > 0, got close={close_thresh} open={open_thresh}"
        )));
    }
    let mut state = Gripper::Open;
    Ok(distances
        .iter()
        .map(|d| {
            match d {
                Some(d) if *d < close_thresh => state = Gripper::Closed,
                Some(d) if *d > open_thresh => state = Gripper::Open,
                _ => {}
            }
            state
        })
        .collect())
}
