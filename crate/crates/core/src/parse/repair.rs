//! Removal of unreachable frames and tracking jumps from an EE pose stream.

use crate::geometry::{interpolate_pose, Pose, Vec3};

use super::ParseError;

/// Numerical slack on the per-step displacement bound.
const STEP_TOL: f64 = 1e-12;

/// Natural cubic spline through `(xs[i], ys[i])`, `xs` strictly increasing.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "spline needs two knots");
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Self { xs, ys, m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Outcome of [`repair_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct RepairedPoses {
    pub poses: Vec<Pose>,
    /// Frames that were replaced.
    pub repaired: Vec<bool>,
}

/// Replaces frames that are missing, fail `reachable`, or jump faster than
/// `v_jump` from the last accepted frame.
///
/// Translations of replaced frames come from a natural cubic spline through
/// the accepted frames; a gap whose spline values would still violate the
/// constraints is filled linearly instead. Rotations follow the geodesic
/// between the bracketing accepted frames.
pub fn repair_trajectory(
    poses: &[Option<Pose>],
    dt: f64,
    v_jump: f64,
    reachable: impl Fn(&Vec3) -> bool,
) -> Result<RepairedPoses, ParseError> {
    let len = poses.len();
    if len < 2 {
        return Err(ParseError::Unrepairable {
            arm: None,
            reason: format!("need at least 2 frames, got {len}"),
        });
    }
    if !(dt > 0.0 && v_jump > 0.0) {
        return Err(ParseError::InvalidConfig(format!("dt and v_jump must be positive (dt={dt}, v_jump={v_jump})")));
    }
    let step = v_jump * dt;
    let mut invalid: Vec<bool> = poses
        .iter()
        .map(|p| p.is_none_or(|p| !reachable(&p.translation)))
        .collect();
    if invalid[0] || invalid[len - 1] {
        return Err(ParseError::Unrepairable {
            arm: None,
            reason: "first or last frame is invalid".into(),
        });
    }
    let mut last = 0;
    for t in 1..len {
        if invalid[t] {
            continue;
        }
        let d = (poses[t].unwrap().translation - poses[last].unwrap().translation).norm();
        if d > step * (t - last) as f64 + STEP_TOL {
            invalid[t] = true;
        } else {
            last = t;
        }
    }
    if invalid[len - 1] {
        return Err(ParseError::Unrepairable {
            arm: None,
            reason: "last frame is unreachable from the accepted trajectory".into(),
        });
    }
    let bad = invalid.iter().filter(|b| **b).count();
    if 2 * bad > len {
        return Err(ParseError::Unrepairable {
            arm: None,
            reason: format!("{bad} of {len} frames invalid"),
        });
    }
    let mut out: Vec<Pose> = poses.iter().map(|p| p.unwrap_or_default()).collect();
    if bad == 0 {
        return Ok(RepairedPoses {
            poses: out,
            repaired: invalid,
        });
    }

    let knots: Vec<usize> = (0..len).filter(|&t| !invalid[t]).collect();
    let xs: Vec<f64> = knots.iter().map(|&t| t as f64).collect();
    let splines: Vec<NaturalCubicSpline> = (0..3)
        .map(|c| NaturalCubicSpline::new(xs.clone(), knots.iter().map(|&t| out[t].translation[c]).collect()))
        .collect();

    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b == a + 1 {
            continue;
        }
        let (pa, pb) = (out[a], out[b]);
        let mut fill: Vec<Pose> = (a + 1..b)
            .map(|t| {
                let s = (t - a) as f64 / (b - a) as f64;
                let rot = interpolate_pose(&pa, &pb, s).rotation;
                let x = t as f64;
                Pose::from_parts(rot, Vec3::new(splines[0].eval(x), splines[1].eval(x), splines[2].eval(x)))
            })
            .collect();
        let gap_ok = {
            let mut prev = pa.translation;
            let mut ok = true;
            for p in fill.iter().chain(std::iter::once(&pb)) {
                if (p.translation - prev).norm() > step + STEP_TOL || !reachable(&p.translation) {
                    ok = false;
                    break;
                }
                prev = p.translation;
            }
            ok
        };
        if !gap_ok {
            for (p, t) in fill.iter_mut().zip(a + 1..b) {
                let s = (t - a) as f64 / (b - a) as f64;
                *p = interpolate_pose(&pa, &pb, s);
            }
        }
        out[a + 1..b].copy_from_slice(&fill);
    }
    Ok(RepairedPoses {
        poses: out,
        repaired: invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize, step: f64) -> Vec<Option<Pose>> {
        (0..n)
            .map(|t| Some(Pose::from_translation(Vec3::new(0.0, 0.0, 0.1 + step * t as f64))))
            .collect()
    }

    #[test]
    fn spline_interpolates_knots_and_cubics() {
        let xs: Vec<f64> = vec![0.0, 1.0, 2.5, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = NaturalCubicSpline::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
        // linear data is reproduced exactly between knots
        assert!((s.eval(1.7) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn clean_input_is_untouched() {
        let poses = line(10, 0.01);
        let r = repair_trajectory(&poses, 0.1, 1.0, |_| true).unwrap();
        assert!(r.repaired.iter().all(|b| !b));
        assert_eq!(r.poses, poses.iter().map(|p| p.unwrap()).collect::<Vec<_>>());
    }

    #[test]
    fn spike_is_replaced_inside_neighbour_hull() {
        let mut poses = vec![
            Some(Pose::from_translation(Vec3::new(0.0, 0.0, 0.1))),
            Some(Pose::from_translation(Vec3::new(10.0, 10.0, 10.0))),
            Some(Pose::from_translation(Vec3::new(0.0, 0.0, 0.11))),
        ];
        let r = repair_trajectory(&poses, 0.1, 1.0, |_| true).unwrap();
        assert_eq!(r.repaired, vec![false, true, false]);
        let z = r.poses[1].translation;
        assert!(z.x.abs() < 1e-12 && z.y.abs() < 1e-12);
        assert!(z.z >= 0.1 && z.z <= 0.11);
        // also in a longer stream, with the spline active
        poses = line(12, 0.01);
        poses[6] = Some(Pose::from_translation(Vec3::new(10.0, 10.0, 10.0)));
        let r = repair_trajectory(&poses, 0.1, 1.0, |_| true).unwrap();
        let z = r.poses[6].translation;
        assert!((z - Vec3::new(0.0, 0.0, 0.16)).norm() < 1e-9);
        for w in r.poses.windows(2) {
            assert!((w[1].translation - w[0].translation).norm() <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn mostly_invalid_is_unrepairable() {
        let poses = line(10, 0.01);
        let inside = |p: &Vec3| p.z < 0.125 || p.z > 0.185;
        assert!(matches!(
            repair_trajectory(&poses, 0.1, 1.0, inside),
            Err(ParseError::Unrepairable { .. })
        ));
    }

    #[test]
    fn invalid_endpoint_is_unrepairable() {
        let mut poses = line(5, 0.01);
        poses[0] = None;
        assert!(repair_trajectory(&poses, 0.1, 1.0, |_| true).is_err());
    }

    fn noisy_stream() -> impl Strategy<Value = Vec<Option<Pose>>> {
        proptest::collection::vec((0.0f64..1.0, -0.02f64..0.02, proptest::bool::weighted(0.15)), 6..40).prop_map(|v| {
            let n = v.len();
            let mut z = 0.0;
            v.into_iter()
                .enumerate()
                .map(|(t, (u, dz, spike))| {
                    z += dz;
                    if spike && t > 0 && t + 1 < n {
                        Some(Pose::from_translation(Vec3::new(u * 5.0, 3.0, z)))
                    } else {
                        Some(Pose::from_translation(Vec3::new(0.0, 0.0, z)))
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn repair_is_idempotent_and_bounded(poses in noisy_stream()) {
            let inside = |p: &Vec3| p.y.abs() < 1.0;
            if let Ok(r) = repair_trajectory(&poses, 0.1, 0.5, inside) {
                for w in r.poses.windows(2) {
                    prop_assert!((w[1].translation - w[0].translation).norm() <= 0.05 + 1e-9);
                }
                prop_assert!(r.poses.iter().all(|p| inside(&p.translation)));
                let again: Vec<Option<Pose>> = r.poses.iter().map(|p| Some(*p)).collect();
                let r2 = repair_trajectory(&again, 0.1, 0.5, inside).unwrap();
                prop_assert_eq!(r2.poses, r.poses);
                prop_assert!(r2.repaired.iter().all(|b| !b));
            }
        }
    }
}
