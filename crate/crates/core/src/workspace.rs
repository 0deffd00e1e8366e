//! Workspace bounds and per-arm reach used for feasibility tests.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::trajectory::NUM_ARMS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBox {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn diagonal(&self) -> f64 {
        (0..3)
            .map(|i| (self.max[i] - self.min[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_well_formed(&self) -> bool {
        (0..3).all(|i| !self.min[i].is_nan() && !self.max[i].is_nan() && self.min[i] <= self.max[i])
    }
}

/// Base position and reach radius of one arm, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmReach {
    pub base: [f64; 3],
    pub reach: f64,
}

impl ArmReach {
    pub fn reaches(&self, p: &Vec3) -> bool {
        (p - Vec3::from(self.base)).norm() <= self.reach
    }
}

/// Decides whether an arm can execute an end-effector position.
pub trait Reachability: Sync {
    fn reachable(&self, arm: usize, position: &Vec3) -> bool;
}

/// Box test plus the arm's reach sphere; either part may be left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxAndSphereReach {
    #[serde(default)]
    pub workspace: Option<WorkspaceBox>,
    #[serde(default)]
    pub arms: Option<[ArmReach; NUM_ARMS]>,
}

impl Reachability for BoxAndSphereReach {
    fn reachable(&self, arm: usize, position: &Vec3) -> bool {
        if !position.iter().all(|v| v.is_finite()) {
            return false;
        }
        if let Some(ws) = &self.workspace {
            if !ws.contains(position) {
                return false;
            }
        }
        match &self.arms {
            Some(arms) => arms[arm].reaches(position),
            None => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_sphere() {
        let reach = BoxAndSphereReach {
            workspace: Some(WorkspaceBox {
                min: [-1.0, -1.0, 0.0],
                max: [1.0, 1.0, 1.0],
            }),
            arms: Some([
                ArmReach {
                    base: [-0.5, 0.0, 0.0],
                    reach: 0.6,
                },
                ArmReach {
                    base: [0.5, 0.0, 0.0],
                    reach: 0.6,
                },
            ]),
        };
        let p = Vec3::new(-0.4, 0.2, 0.1);
        assert!(reach.reachable(0, &p));
        assert!(!reach.reachable(1, &p));
        assert!(!reach.reachable(0, &Vec3::new(-0.4, 0.2, -0.1)));
        assert!(!reach.reachable(0, &Vec3::new(f64::NAN, 0.0, 0.0)));
    }
}
