use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

use super::ParseError;

/// Pinhole intrinsics plus the camera → task frame extrinsics.
///
/// Pixel `(u, v)` addresses column `u`, row `v`; integer coordinates are
/// pixel centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsics: Pose,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub(crate) struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), ParseError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if !ok {
            return Err(ParseError::InvalidCamera(format!(
                "fx={} fy={} cx={} cy={} size={}x{}",
                self.fx, self.fy, self.cx, self.cy, self.width, self.height
            )));
        }
        self.extrinsics
            .validate(1e-6)
            .map_err(|e| ParseError::InvalidCamera(format!("extrinsics: {e}")))
    }

    /// Camera-frame point at `depth` along the ray through `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Task-frame point for pixel `(u, v)` at `depth`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.extrinsics.apply(&self.unproject(u, v, depth))
    }

    /// Pixel and depth of a camera-frame point.
    pub fn project_camera(&self, p: &Vec3) -> (f64, f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        )
    }

    /// Pixel and depth of a task-frame point.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        self.project_camera(&self.extrinsics.inverse().apply(p))
    }

    /// Nearest pixel index, if inside the image.
    pub fn pixel_index(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        if !u.is_finite() || !v.is_finite() {
            return None;
        }
        let (i, j) = (u.round(), v.round());
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    pub(crate) fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }

    pub(crate) fn from_parts(i: Intrinsics, extrinsics: Pose) -> Self {
        Self {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
            extrinsics,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle, Vec3};
    use proptest::prelude::*;

    fn camera() -> CameraModel {
        CameraModel {
            fx: 320.0,
            fy: 310.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
            extrinsics: Pose::from_parts(
                axis_angle(&Vec3::new(1.0, 0.2, 0.0).normalize(), 2.3),
                Vec3::new(0.1, -0.6, 0.9),
            ),
        }
    }

    #[test]
    fn principal_ray() {
        let mut cam = camera();
        cam.extrinsics = Pose::identity();
        assert_eq!(cam.backproject(cam.cx, cam.cy, 1.0), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn invalid_intrinsics() {
        let mut cam = camera();
        cam.cx = 400.0;
        assert!(cam.validate().is_err());
        let mut cam = camera();
        cam.fx = 0.0;
        assert!(cam.validate().is_err());
        assert!(camera().validate().is_ok());
    }

    proptest! {
        #[test]
        fn backprojection_then_projection_recovers_pixel(
            u in 0.0f64..319.0, v in 0.0f64..239.0, d in 0.2f64..3.0
        ) {
            let cam = camera();
            let p = cam.backproject(u, v, d);
            let (u2, v2, d2) = cam.project(&p);
            prop_assert!((u2 - u).abs() < 0.5 && (v2 - v).abs() < 0.5);
            prop_assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9);
            prop_assert!((d2 - d).abs() < 1e-12);
        }
    }
}
