//! Rigid-body primitives shared by every stage of the pipeline.
//!
//! Rotations are plain 3×3 matrices and poses are (rotation, translation)
//! pairs acting as `x ↦ R·x + t`. Composition follows the homogeneous-matrix
//! convention: `a.compose(&b)` is the transform `a · b`, i.e. `b` is applied
//! first.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Inputs shorter than this are treated as having no direction.
pub const EPS_VEC: f64 = 1e-9;

/// Tolerance used by the orthonormality checks on [`Pose`].
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate vector (norm {norm:e} below {EPS_VEC:e})")]
    DegenerateVector { norm: f64 },
    #[error("rotation is not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("rotation has determinant {det}, expected +1")]
    ImproperRotation { det: f64 },
    #[error("non-finite value in pose")]
    NonFinite,
    #[error("plane normal has zero length")]
    DegeneratePlane,
}

/// A rigid transform in SE(3). Translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose after checking the rotation invariants.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate(ROTATION_TOL)?;
        Ok(pose)
    }

    /// Builds a pose without validation. Callers guarantee `rotation` is proper.
    pub fn from_parts(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// Rotation by `angle` about the vertical axis, leaving `center` fixed.
    pub fn yaw_about(center: &Vec3, angle: f64) -> Self {
        let rotation = rotation_z(angle);
        Self {
            rotation,
            translation: center - rotation * center,
        }
    }

    pub fn validate(&self, tol: f64) -> Result<(), GeometryError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let residual = orthonormality_residual(&self.rotation);
        if residual > tol {
            return Err(GeometryError::NotOrthonormal { residual });
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > tol {
            return Err(GeometryError::ImproperRotation { det });
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate(ROTATION_TOL).is_ok()
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, point: &Vec3) -> Vec3 {
        self.rotation * point + self.translation
    }

    /// Rotates a direction; translation is ignored.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Relative transform `self⁻¹ · other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    /// Approach axis of a gripper frame (third column).
    pub fn approach(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Translation distance and rotation angle separating two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        let dt = (self.translation - other.translation).norm();
        let dr = rotation_angle(&(self.rotation.transpose() * other.rotation));
        (dt, dr)
    }

    /// Row-major rotation followed by translation, the 12-real record layout.
    pub fn to_record(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
            out[9 + r] = self.translation[r];
        }
        out
    }

    pub fn from_record(record: &[f64; 12]) -> Result<Pose, GeometryError> {
        let rotation = Mat3::from_row_slice(&record[..9]);
        let translation = Vec3::new(record[9], record[10], record[11]);
        Pose::new(rotation, translation)
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_matrix4_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out[15] = 1.0;
        out
    }

    pub fn from_matrix4_row_major(m: &[f64; 16]) -> Result<Pose, GeometryError> {
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vec3::new(m[3], m[7], m[11]);
        let pose = Pose::from_parts(rotation, translation);
        pose.validate(1e-6)?;
        Ok(pose.renormalized())
    }

    /// Projects the rotation back onto SO(3) when it has drifted measurably.
    pub fn renormalized(self) -> Pose {
        if orthonormality_residual(&self.rotation) <= 1e-12 {
            return self;
        }
        Pose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;

    fn mul(self, rhs: &'a Pose) -> Pose {
        self.compose(rhs)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        write!(
            f,
            "Pose(t=[{:.4}, {:.4}, {:.4}], angle={:.4} rad)",
            t.x,
            t.y,
            t.z,
            rotation_angle(&self.rotation)
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    rotation: [f64; 9],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rec = self.to_record();
        let mut rotation = [0.0; 9];
        rotation.copy_from_slice(&rec[..9]);
        PoseRepr {
            position: [rec[9], rec[10], rec[11]],
            rotation,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let pose = Pose::from_parts(
            Mat3::from_row_slice(&repr.rotation),
            Vec3::from(repr.position),
        );
        pose.validate(1e-6).map_err(serde::de::Error::custom)?;
        Ok(pose.renormalized())
    }
}

/// `‖RᵀR − I‖_∞`.
pub fn orthonormality_residual(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).abs().max()
}

/// Closest proper rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut fix = Mat3::identity();
        fix[(2, 2)] = -1.0;
        r = u * fix * v_t;
    }
    r
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rotation_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `angle` about the unit `axis` (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// Exponential map from a rotation vector.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        let k = skew(w);
        return Mat3::identity() + k + k * k * 0.5;
    }
    axis_angle(&(w / theta), theta)
}

/// Logarithm of a rotation as a rotation vector with angle in `[0, π]`.
pub fn so3_log(r: &Mat3) -> Vec3 {
    let vee = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin_term = 0.5 * vee.norm();
    let cos_term = 0.5 * (r.trace() - 1.0);
    let theta = sin_term.atan2(cos_term);
    if theta < 1e-9 {
        // first-order: R ≈ I + [w]×
        return vee * 0.5;
    }
    if std::f64::consts::PI - theta > 1e-4 {
        return vee * (theta / (2.0 * sin_term));
    }
    // Near π the antisymmetric part vanishes; recover the axis from RRᵀ-symmetric part.
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * cos_term;
    let denom = 1.0 - cos_term;
    let outer = sym / denom;
    let mut best = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(best, best)] {
            best = i;
        }
    }
    let mut axis: Vec3 = outer.column(best).into_owned();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rotation angle of `r` in `[0, π]`.
pub fn rotation_angle(r: &Mat3) -> f64 {
    so3_log(r).norm()
}

/// Result of aligning one direction onto another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub rotation: Mat3,
    /// Set when the inputs were antipodal and the fixed fallback axis was used.
    pub antipodal: bool,
}

/// Minimal-angle rotation taking direction `a` onto direction `b`.
///
/// Antipodal inputs have no unique minimal rotation; they resolve to a half
/// turn about the basis vector with the smallest `|â_i|` (ties go to the later
/// axis), made orthogonal to `â`.
pub fn rotation_between(a: &Vec3, b: &Vec3) -> Result<Alignment, GeometryError> {
    let (na, nb) = (a.norm(), b.norm());
    if na <= EPS_VEC || !na.is_finite() {
        return Err(GeometryError::DegenerateVector { norm: na });
    }
    if nb <= EPS_VEC || !nb.is_finite() {
        return Err(GeometryError::DegenerateVector { norm: nb });
    }
    let a_hat = a / na;
    let b_hat = b / nb;
    let v = a_hat.cross(&b_hat);
    let c = a_hat.dot(&b_hat);
    let s = v.norm();
    if s <= 1e-14 {
        if c > 0.0 {
            return Ok(Alignment {
                rotation: Mat3::identity(),
                antipodal: false,
            });
        }
        let axis = fallback_axis(&a_hat);
        return Ok(Alignment {
            rotation: axis_angle(&axis, std::f64::consts::PI),
            antipodal: true,
        });
    }
    let mut axis = v / s;
    // keep the axis exactly perpendicular to â so R·â stays accurate near antipodal inputs
    axis -= a_hat * axis.dot(&a_hat);
    axis /= axis.norm();
    let angle = s.atan2(c);
    Ok(Alignment {
        rotation: axis_angle(&axis, angle),
        antipodal: false,
    })
}

fn fallback_axis(a_hat: &Vec3) -> Vec3 {
    let mut idx = 0;
    for i in 1..3 {
        if a_hat[i].abs() <= a_hat[idx].abs() {
            idx = i;
        }
    }
    let mut e = Vec3::zeros();
    e[idx] = 1.0;
    let p = e - a_hat * a_hat.dot(&e);
    p / p.norm()
}

/// Geodesic interpolation: linear translation, constant angular velocity rotation.
pub fn interpolate_pose(p: &Pose, q: &Pose, t: f64) -> Pose {
    if t == 0.0 {
        return *p;
    }
    if t == 1.0 {
        return *q;
    }
    let translation = p.translation + (q.translation - p.translation) * t;
    let delta = so3_log(&(p.rotation.transpose() * q.rotation));
    let rotation = p.rotation * so3_exp(&(delta * t));
    Pose {
        rotation,
        translation,
    }
}

/// Plane `{x : n·x = offset}` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneRepr", into = "PlaneRepr")]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct PlaneRepr {
    normal: [f64; 3],
    offset: f64,
}

impl TryFrom<PlaneRepr> for Plane {
    type Error = GeometryError;

    fn try_from(r: PlaneRepr) -> Result<Self, Self::Error> {
        Plane::new(Vec3::from(r.normal), r.offset)
    }
}

impl From<Plane> for PlaneRepr {
    fn from(p: Plane) -> Self {
        PlaneRepr {
            normal: p.normal.into(),
            offset: p.offset,
        }
    }
}

impl Plane {
    /// Normalizes `normal`; `offset` is the signed distance along the normalized normal.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if n <= EPS_VEC || !n.is_finite() || !offset.is_finite() {
            return Err(GeometryError::DegeneratePlane);
        }
        Ok(Self {
            normal: normal / n,
            offset,
        })
    }

    /// The YZ plane through the origin.
    pub fn yz() -> Self {
        Self {
            normal: Vec3::x(),
            offset: 0.0,
        }
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Householder matrix `I − 2nnᵀ`.
    pub fn householder(&self) -> Mat3 {
        Mat3::identity() - self.normal * self.normal.transpose() * 2.0
    }

    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

pub fn reflect_point(x: &Vec3, plane: &Plane) -> Vec3 {
    x - plane.normal * (2.0 * plane.signed_distance(x))
}

/// Mirrors a frame: translation is reflected and the rotation becomes `S·R·S`,
/// which keeps it proper.
pub fn reflect_pose(p: &Pose, plane: &Plane) -> Pose {
    let s = plane.householder();
    Pose {
        rotation: s * p.rotation * s,
        translation: reflect_point(&p.translation, plane),
    }
}

/// Conjugates a world-frame transform by the reflection, so that
/// `reflect_pose(W·T) = reflect_transform(W)·reflect_pose(T)`.
pub fn reflect_transform(w: &Pose, plane: &Plane) -> Pose {
    let s = plane.householder();
    let rotation = s * w.rotation * s;
    // M(x) = Sx + 2dn ; M∘W∘M(x) = S R S x + S R (2dn) + S t + 2dn
    let shift = plane.normal * (2.0 * plane.offset);
    let translation = s * (w.rotation * shift + w.translation) + shift;
    Pose {
        rotation,
        translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn arb_unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-degenerate", |(x, y, z)| (x * x + y * y + z * z) > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (arb_unit(), -PI..PI, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(
            |(axis, angle, x, y, z)| Pose::from_parts(axis_angle(&axis, angle), Vec3::new(x, y, z)),
        )
    }

    fn max_abs(m: &Mat3) -> f64 {
        m.abs().max()
    }

    #[test]
    fn aligned_inputs_give_identity() {
        let al = rotation_between(&Vec3::x(), &Vec3::x()).unwrap();
        assert_eq!(al.rotation, Mat3::identity());
        assert!(!al.antipodal);
    }

    #[test]
    fn x_onto_y() {
        let al = rotation_between(&Vec3::x(), &Vec3::y()).unwrap();
        assert!((al.rotation * Vec3::x() - Vec3::y()).norm() < 1e-12);
        // minimal rotation about +z
        assert!((al.rotation * Vec3::z() - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn antipodal_uses_fixed_axis() {
        let al = rotation_between(&Vec3::x(), &(-Vec3::x())).unwrap();
        assert!(al.antipodal);
        let expected = axis_angle(&Vec3::z(), PI);
        assert!(max_abs(&(al.rotation - expected)) < 1e-12);
        assert!((al.rotation * Vec3::x() + Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn degenerate_vector_rejected() {
        assert!(matches!(
            rotation_between(&Vec3::new(1e-10, 0.0, 0.0), &Vec3::x()),
            Err(GeometryError::DegenerateVector { .. })
        ));
    }

    #[test]
    fn near_antipodal_is_accurate() {
        let a = Vec3::new(0.3, -0.5, 0.8).normalize();
        for eps in [1e-3, 1e-5, 1e-7, 1e-9] {
            let perp = a.cross(&Vec3::x()).normalize();
            let b = (-a + perp * eps).normalize();
            let al = rotation_between(&a, &b).unwrap();
            assert!((al.rotation * a - b).norm() < 1e-9, "eps {eps}");
            assert!(orthonormality_residual(&al.rotation) < 1e-12);
        }
    }

    #[test]
    fn identity_and_translation_actions() {
        let p = Pose::from_parts(axis_angle(&Vec3::y(), 0.3), Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(Pose::identity().compose(&p), p);
        let t = Pose::from_translation(Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(t.apply(&Vec3::zeros()), Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn reflection_examples() {
        let plane = Plane::yz();
        let x = reflect_point(&Vec3::new(0.3, 0.1, 0.2), &plane);
        assert_eq!(x, Vec3::new(-0.3, 0.1, 0.2));
        let r = reflect_pose(&Pose::identity(), &plane);
        assert_eq!(r.rotation, Mat3::identity());
        assert_eq!(r.translation, Vec3::zeros());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let p = Pose::identity();
        let q = Pose::from_translation(Vec3::new(0.2, 0.0, 0.0));
        assert_eq!(interpolate_pose(&p, &q, 0.0), p);
        assert_eq!(interpolate_pose(&p, &q, 1.0), q);
        let m = interpolate_pose(&p, &q, 0.5);
        assert!((m.translation - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn interpolation_halves_axis_angle() {
        let p = Pose::identity();
        let q = Pose::from_rotation(rotation_z(FRAC_PI_2));
        let m = interpolate_pose(&p, &q, 0.5);
        assert!(max_abs(&(m.rotation - rotation_z(FRAC_PI_4))) < 1e-12);
    }

    #[test]
    fn log_exp_near_pi() {
        let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
        for angle in [PI, PI - 1e-6, PI - 1e-3, 1e-8, 0.0, 2.0] {
            let r = axis_angle(&axis, angle);
            let w = so3_log(&r);
            assert!(max_abs(&(so3_exp(&w) - r)) < 1e-9, "angle {angle}");
            assert!((w.norm() - angle).abs() < 1e-9);
        }
    }

    #[test]
    fn plane_rejects_zero_normal() {
        assert!(Plane::new(Vec3::zeros(), 0.0).is_err());
        let p = Plane::new(Vec3::new(2.0, 0.0, 0.0), 0.5).unwrap();
        assert!((p.normal().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_json_round_trip_is_exact() {
        let p = Pose::from_parts(axis_angle(&Vec3::new(0.2, 0.3, 0.9).normalize(), 1.1), Vec3::new(0.123456789, -1.0, 3.5));
        let s = serde_json::to_string(&p).unwrap();
        let q: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn non_rotation_rejected_on_load() {
        let bad = r#"{"position":[0,0,0],"rotation":[2,0,0,0,1,0,0,0,1]}"#;
        assert!(serde_json::from_str::<Pose>(bad).is_err());
        let mirror = r#"{"position":[0,0,0],"rotation":[-1,0,0,0,1,0,0,0,1]}"#;
        assert!(serde_json::from_str::<Pose>(mirror).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn double_inverse_is_identity(p in arb_pose()) {
            let q = p.inverse().inverse();
            prop_assert!(max_abs(&(q.rotation - p.rotation)) < 1e-12);
            prop_assert!((q.translation - p.translation).norm() < 1e-12);
            let id = p.compose(&p.inverse());
            prop_assert!(max_abs(&(id.rotation - Mat3::identity())) < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
        }

        #[test]
        fn apply_is_rigid(p in arb_pose(), a in arb_unit(), b in arb_unit()) {
            let d0 = (a - b).norm();
            let d1 = (p.apply(&a) - p.apply(&b)).norm();
            prop_assert!((d0 - d1).abs() < 1e-12);
        }

        #[test]
        fn alignment_maps_a_onto_b(a in arb_unit(), b in arb_unit(), sa in 0.01f64..10.0, sb in 0.01f64..10.0) {
            prop_assume!(a.dot(&b) > -1.0 + 1e-6);
            let al = rotation_between(&(a * sa), &(b * sb)).unwrap();
            prop_assert!((al.rotation * a - b).norm() < 1e-9);
            prop_assert!(orthonormality_residual(&al.rotation) < 1e-9);
            prop_assert!((al.rotation.determinant() - 1.0).abs() < 1e-9);
            // axis ∝ a×b when the rotation is non-trivial
            let cross = a.cross(&b);
            if cross.norm() > 1e-6 {
                let axis = so3_log(&al.rotation).normalize();
                prop_assert!((axis - cross.normalize()).norm() < 1e-6);
            }
        }

        #[test]
        fn reflection_is_an_isometric_involution(
            p in arb_pose(), q in arb_pose(), n in arb_unit(), d in -1.0f64..1.0
        ) {
            let plane = Plane::new(n, d).unwrap();
            let rp = reflect_pose(&p, &plane);
            prop_assert!(rp.is_valid());
            let back = reflect_pose(&rp, &plane);
            prop_assert!(max_abs(&(back.rotation - p.rotation)) < 1e-12);
            prop_assert!((back.translation - p.translation).norm() < 1e-12);
            let rq = reflect_pose(&q, &plane);
            let d0 = (p.translation - q.translation).norm();
            let d1 = (rp.translation - rq.translation).norm();
            prop_assert!((d0 - d1).abs() < 1e-12);
        }

        #[test]
        fn reflected_transform_commutes(w in arb_pose(), t in arb_pose(), n in arb_unit(), d in -1.0f64..1.0) {
            let plane = Plane::new(n, d).unwrap();
            let lhs = reflect_pose(&w.compose(&t), &plane);
            let rhs = reflect_transform(&w, &plane).compose(&reflect_pose(&t, &plane));
            prop_assert!(max_abs(&(lhs.rotation - rhs.rotation)) < 1e-12);
            prop_assert!((lhs.translation - rhs.translation).norm() < 1e-12);
        }

        #[test]
        fn interpolated_angle_grows_linearly(p in arb_pose(), q in arb_pose(), t in 0.0f64..1.0) {
            let total = rotation_angle(&(p.rotation.transpose() * q.rotation));
            prop_assume!(total < PI - 1e-3);
            let m = interpolate_pose(&p, &q, t);
            let partial = rotation_angle(&(p.rotation.transpose() * m.rotation));
            prop_assert!((partial - t * total).abs() < 1e-9);
            prop_assert!(orthonormality_residual(&m.rotation) < 1e-9);
        }
    }
}
