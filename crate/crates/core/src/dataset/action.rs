//! 20-dimensional bimanual action encoding: per arm, position, the first two
//! rotation columns and the gripper bit.

use crate::geometry::{Mat3, Pose, Vec3};
use crate::trajectory::{ArmAction, BimanualAction, Gripper, NUM_ARMS};

use super::DatasetError;

pub const ACTION_DIM: usize = 20;
const ARM_DIM: usize = ACTION_DIM / NUM_ARMS;

pub fn encode_action(action: &BimanualAction) -> [f64; ACTION_DIM] {
    let mut out = [0.0; ACTION_DIM];
    for (j, a) in action.iter().enumerate() {
        let o = &mut out[j * ARM_DIM..(j + 1) * ARM_DIM];
        let r = &a.pose.rotation;
        o[..3].copy_from_slice(a.pose.translation.as_slice());
        o[3..6].copy_from_slice(r.column(0).as_slice());
        o[6..9].copy_from_slice(r.column(1).as_slice());
        o[9] = a.gripper.as_f64();
    }
    out
}

/// Inverse of [`encode_action`]; the rotation is rebuilt by Gram–Schmidt on
/// the two columns, the third being their cross product.
pub fn decode_action(v: &[f64; ACTION_DIM]) -> Result<BimanualAction, DatasetError> {
    let arm = |j: usize| -> Result<ArmAction, DatasetError> {
        let o = &v[j * ARM_DIM..(j + 1) * ARM_DIM];
        let bad = |m: &str| DatasetError::InvalidOptions(format!("arm {j}: {m}"));
        if o.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite entry"));
        }
        let a = Vec3::new(o[3], o[4], o[5]);
        let b = Vec3::new(o[6], o[7], o[8]);
        let x = a.try_normalize(1e-12).ok_or_else(|| bad("degenerate first column"))?;
        let y = (b - x * x.dot(&b)).try_normalize(1e-12).ok_or_else(|| bad("parallel rotation columns"))?;
        let rotation = Mat3::from_columns(&[x, y, x.cross(&y)]);
        let gripper = Gripper::from_closed(o[9] >= 0.5);
        Ok(ArmAction::new(Pose::from_parts(rotation, Vec3::new(o[0], o[1], o[2])), gripper))
    };
    Ok([arm(0)?, arm(1)?])
}
