//! Robust depth lookup and 2D → 3D keypoint track lifting.

use crate::geometry::Vec3;

use super::bundle::DepthFrame;
use super::camera::CameraModel;
use super::ParseError;

/// Depth values farther than this many median-absolute-deviations from the
/// window median are discarded.
pub const MAD_CUTOFF: f64 = 3.0;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median of `values` after rejecting MAD outliers. `None` when empty.
pub fn robust_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut buf = values.to_vec();
    let med = median(&mut buf);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    let mut kept: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| (v - med).abs() <= MAD_CUTOFF * mad)
        .collect();
    Some(median(&mut kept))
}

/// Robust depth in a `window × window` neighbourhood of pixel `(u, v)`.
pub fn window_depth(frame: &DepthFrame, camera: &CameraModel, u: f64, v: f64, window: usize) -> Option<f64> {
    let (ci, cj) = camera.pixel_index(u, v)?;
    let half = window / 2;
    let (i0, i1) = (ci.saturating_sub(half), (ci + half).min(frame.width - 1));
    let (j0, j1) = (cj.saturating_sub(half), (cj + half).min(frame.height - 1));
    let mut samples = Vec::with_capacity(window * window);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let d = frame.get(i, j);
            if d.is_finite() && d > 0.0 {
                samples.push(d as f64);
            }
        }
    }
    robust_median(&samples)
}

/// A lifted track; `interpolated[t]` marks frames filled from neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTrack {
    pub points: Vec<Vec3>,
    pub interpolated: Vec<bool>,
}

/// Fills `None` entries by linear interpolation between the nearest valid
/// neighbours, holding the nearest value past either end.
pub(crate) fn fill_gaps(values: &[Option<Vec3>]) -> Option<(Vec<Vec3>, Vec<bool>)> {
    let valid: Vec<usize> = (0..values.len()).filter(|&t| values[t].is_some()).collect();
    if valid.is_empty() {
        return None;
    }
    let mut points = Vec::with_capacity(values.len());
    let mut flags = Vec::with_capacity(values.len());
    let mut next = 0;
    for (t, v) in values.iter().enumerate() {
        if let Some(p) = v {
            points.push(*p);
            flags.push(false);
            next += 1;
            continue;
        }
        let after = valid.get(next).copied();
        let before = if next > 0 { Some(valid[next - 1]) } else { None };
        let p = match (before, after) {
            (Some(a), Some(b)) => {
                let (pa, pb) = (values[a].unwrap(), values[b].unwrap());
                let s = (t - a) as f64 / (b - a) as f64;
                pa + (pb - pa) * s
            }
            (Some(a), None) => values[a].unwrap(),
            (None, Some(b)) => values[b].unwrap(),
            (None, None) => unreachable!("at least one valid frame"),
        };
        points.push(p);
        flags.push(true);
    }
    Some((points, flags))
}

/// Lifts a pixel track into the task frame using robust window depth.
pub fn backproject_track(
    uv: &[[f64; 2]],
    depth: &[DepthFrame],
    camera: &CameraModel,
    window: usize,
) -> Result<LiftedTrack, ParseError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(ParseError::InvalidConfig(format!("depth window must be odd and ≥ 1, got {window}")));
    }
    let raw: Vec<Option<Vec3>> = uv
        .iter()
        .zip(depth)
        .map(|([u, v], frame)| {
            window_depth(frame, camera, *u, *v, window).map(|d| camera.backproject(*u, *v, d))
        })
        .collect();
    let (points, interpolated) = fill_gaps(&raw).ok_or(ParseError::AllDepthInvalid { track: None })?;
    Ok(LiftedTrack {
        points,
        interpolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn camera() -> CameraModel {
        CameraModel {
            fx: 100.0,
            fy: 100.0,
            cx: 10.0,
            cy: 10.0,
            width: 21,
            height: 21,
            extrinsics: Pose::identity(),
        }
    }

    #[test]
    fn principal_point_at_unit_depth() {
        let cam = camera();
        let frames = vec![DepthFrame::filled(21, 21, 1.0); 2];
        let t = backproject_track(&[[10.0, 10.0]; 2], &frames, &cam, 5).unwrap();
        assert_eq!(t.points[0], Vec3::new(0.0, 0.0, 1.0));
        assert!(!t.interpolated[0]);
    }

    #[test]
    fn median_rejects_single_outlier() {
        let mut samples = vec![0.5; 24];
        samples.push(10.0);
        assert_eq!(robust_median(&samples), Some(0.5));
        let cam = camera();
        let mut frame = DepthFrame::filled(21, 21, 0.5);
        frame.set(12, 12, 10.0);
        assert_eq!(window_depth(&frame, &cam, 10.0, 10.0, 5), Some(0.5));
    }

    #[test]
    fn invalid_frame_is_interpolated() {
        let cam = camera();
        let frames = vec![
            DepthFrame::filled(21, 21, 0.4),
            DepthFrame::filled(21, 21, 0.0),
            DepthFrame::filled(21, 21, 0.6),
        ];
        let t = backproject_track(&[[10.0, 10.0]; 3], &frames, &cam, 3).unwrap();
        assert!((t.points[1] - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-7);
        assert_eq!(t.interpolated, vec![false, true, false]);
    }

    #[test]
    fn leading_and_trailing_gaps_hold_nearest() {
        let v = vec![None, Some(Vec3::x()), None];
        let (p, f) = fill_gaps(&v).unwrap();
        assert_eq!(p, vec![Vec3::x(); 3]);
        assert_eq!(f, vec![true, false, true]);
    }

    #[test]
    fn all_invalid_is_an_error() {
        let cam = camera();
        let frames = vec![DepthFrame::filled(21, 21, 0.0); 2];
        assert!(matches!(
            backproject_track(&[[10.0, 10.0]; 2], &frames, &cam, 3),
            Err(ParseError::AllDepthInvalid { .. })
        ));
        // off-image pixels behave like missing depth
        let frames = vec![DepthFrame::filled(21, 21, 1.0); 2];
        assert!(backproject_track(&[[-5.0, 10.0]; 2], &frames, &cam, 3).is_err());
    }

    #[test]
    fn even_window_rejected() {
        let cam = camera();
        let frames = vec![DepthFrame::filled(21, 21, 1.0); 2];
        assert!(matches!(
            backproject_track(&[[10.0, 10.0]; 2], &frames, &cam, 4),
            Err(ParseError::InvalidConfig(_))
        ));
    }
}
