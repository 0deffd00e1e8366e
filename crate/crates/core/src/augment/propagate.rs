//! Rigid propagation of object keypoints along the augmented actions.

use crate::geometry::{Pose, Vec3};
use crate::grounding::{EventKind, GraspEvent, GraspEventLog};
use crate::trajectory::{BimanualAction, NUM_ARMS};

use super::AugmentError;

/// Grasp events of the augmented gripper streams, with the object of the
/// n-th grasp on each arm taken from the n-th grasp of `reference`.
pub fn augmented_events(actions: &[BimanualAction], reference: &GraspEventLog) -> GraspEventLog {
    GraspEventLog {
        arms: std::array::from_fn(|j| {
            let tr = GraspEventLog::transitions(actions.iter().map(|a| a[j].gripper));
            let objects: Vec<Option<usize>> = reference.arms[j]
                .iter()
                .filter(|e| e.kind == EventKind::Grasp)
                .map(|e| e.object)
                .collect();
            let mut n = 0;
            GraspEventLog::attach(&tr, |_| {
                n += 1;
                objects.get(n - 1).copied().flatten()
            })
        }),
    }
}

/// Keypoint states over the augmented horizon, flat `L × N`.
///
/// Every keypoint starts at `initial`. An object follows the arm that most
/// recently grasped it, from that grasp up to and including its release;
/// otherwise it stays where it was left.
pub fn propagate_keypoints(
    actions: &[BimanualAction],
    events: &GraspEventLog,
    initial: &[Vec3],
    ownership: &[Vec<usize>],
) -> Result<Vec<Vec3>, AugmentError> {
    let len = actions.len();
    let n = initial.len();
    for ev in events.arms.iter().flatten() {
        if let Some(k) = ev.object {
            if k == 0 || k > ownership.len() || ownership[k - 1].is_empty() {
                return Err(AugmentError::UnownedKeypoints { object: k });
            }
        }
    }
    // per object: (arm, inverse EE pose at grasp, keypoints at grasp)
    let mut holder: Vec<Option<(usize, Pose, Vec<Vec3>)>> = vec![None; ownership.len()];
    let mut cursor = [0usize; NUM_ARMS];
    let mut current = initial.to_vec();
    let mut out = Vec::with_capacity(len * n);
    for (t, action) in actions.iter().enumerate() {
        let mut grasps: Vec<(usize, usize)> = Vec::new();
        let mut releases: Vec<(usize, usize)> = Vec::new();
        for j in 0..NUM_ARMS {
            while let Some(&GraspEvent { t: te, kind, object }) = events.arms[j].get(cursor[j]) {
                if te != t {
                    break;
                }
                cursor[j] += 1;
                let Some(k) = object else { continue };
                match kind {
                    EventKind::Grasp => grasps.push((j, k)),
                    EventKind::Release => releases.push((j, k)),
                }
            }
        }
        for (k, h) in holder.iter().enumerate() {
            if let Some((j, inv, at)) = h {
                let rel = action[*j].pose.compose(inv);
                for (&i, p) in ownership[k].iter().zip(at) {
                    current[i] = rel.apply(p);
                }
            }
        }
        for (j, k) in grasps {
            let at: Vec<Vec3> = ownership[k - 1].iter().map(|&i| current[i]).collect();
            holder[k - 1] = Some((j, action[j].pose.inverse(), at));
        }
        // a release takes effect after this frame and only for the owner
        for (j, k) in releases {
            if holder[k - 1].as_ref().is_some_and(|h| h.0 == j) {
                holder[k - 1] = None;
            }
        }
        out.extend_from_slice(&current);
    }
    Ok(out)
}
