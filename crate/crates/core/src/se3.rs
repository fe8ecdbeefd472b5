//! Rigid-body primitives shared by every other module.
//!
//! Rotations are stored as unit quaternions and re-normalized after every
//! composition, so long-running loops do not accumulate drift. Matrix form
//! is produced on demand for objective evaluation.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Rotation of `angle` radians about `axis`. A zero axis yields identity.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        match Unit::try_new(axis, 1e-15) {
            Some(axis) => Self(UnitQuaternion::from_axis_angle(&axis, angle)),
            None => Self::identity(),
        }
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::x(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    /// Exponential map of a rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(v: Vector3<f64>) -> Self {
        Self(UnitQuaternion::from_scaled_axis(v))
    }

    /// Logarithm map; the result has norm in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        // Keep w >= 0 so the returned angle is the short way round.
        let q = self.0.quaternion();
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let sin_half = v.norm();
        if sin_half < 1e-12 {
            return 2.0 * v;
        }
        let angle = 2.0 * sin_half.atan2(w);
        v * (angle / sin_half)
    }

    /// Builds a rotation from quaternion components `[w, x, y, z]`,
    /// normalizing them unless they are already unit length to within
    /// rounding, so a serialized rotation reads back bit-for-bit. Returns
    /// `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(q: [f64; 4]) -> Option<Self> {
        if q.iter().any(|c| !c.is_finite()) {
            return None;
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if norm < 1e-12 {
            return None;
        }
        if (norm - 1.0).abs() <= 8.0 * f64::EPSILON {
            return Some(Self(UnitQuaternion::new_unchecked(quat)));
        }
        Some(Self(UnitQuaternion::from_quaternion(quat)))
    }

    pub fn to_wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Rotation whose columns are the given orthonormal axes. The input is
    /// projected onto SO(3) if it is slightly off.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix(m);
        Self(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self * other`, re-normalized.
    pub fn then(&self, other: &Rotation) -> Self {
        let mut q = self.0 * other.0;
        q.renormalize();
        Self(q)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Image of the local z-axis.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.0 * Vector3::z()
    }

    pub fn is_finite(&self) -> bool {
        self.to_wxyz().iter().all(|c| c.is_finite())
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.then(&rhs)
    }
}

/// Angle of the axis-angle decomposition of `r`, in `[0, π]`.
pub fn rotation_angle(r: &Rotation) -> f64 {
    let q = r.quaternion().quaternion();
    let w = q.w.abs().clamp(-1.0, 1.0);
    2.0 * q.imag().norm().atan2(w)
}

/// Rigid transform: maps points of a child frame into the parent frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Rotation) -> Self {
        Self { position, rotation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, Rotation::identity())
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Self::new(Vector3::zeros(), rotation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.position
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite()) && self.rotation.is_finite()
    }
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        position: a.rotation.apply(&b.position) + a.position,
        rotation: a.rotation.then(&b.rotation),
    }
}

pub fn invert(p: &Pose) -> Pose {
    let inv = p.rotation.inverse();
    Pose {
        position: -inv.apply(&p.position),
        rotation: inv,
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        compose(&self, &rhs)
    }
}

/// Serialized pose: position in meters and quaternion `[w, x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            position: [p.position.x, p.position.y, p.position.z],
            quaternion: p.rotation.to_wxyz(),
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Option<Pose> {
        let position = Vector3::from(self.position);
        if position.iter().any(|c| !c.is_finite()) {
            return None;
        }
        Some(Pose::new(position, Rotation::from_wxyz(self.quaternion)?))
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = PoseRecord::deserialize(d)?;
        rec.to_pose()
            .ok_or_else(|| serde::de::Error::custom("pose has a non-finite position or zero quaternion"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn trace_angle(r: &Rotation) -> f64 {
        ((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.position - b.position).norm() < tol && rotation_angle(&(a.rotation.inverse() * b.rotation)) < tol
    }

    #[test]
    fn angle_of_identity_is_zero() {
        assert_eq!(rotation_angle(&Rotation::identity()), 0.0);
    }

    #[test]
    fn angle_of_quarter_turn() {
        assert_relative_eq!(rotation_angle(&Rotation::about_z(FRAC_PI_2)), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn angle_about_diagonal_axis_matches_trace_formula() {
        let r = Rotation::from_axis_angle(Vector3::new(1.0, 1.0, 1.0), 0.7);
        assert_relative_eq!(rotation_angle(&r), trace_angle(&r), epsilon = 1e-12);
        assert_relative_eq!(rotation_angle(&r), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn angle_near_pi_and_negative_hemisphere() {
        let r = Rotation::about_x(PI - 1e-9);
        assert!((rotation_angle(&r) - (PI - 1e-9)).abs() < 1e-9);
        let r = Rotation::about_y(1.5 * PI);
        assert_relative_eq!(rotation_angle(&r), 0.5 * PI, epsilon = 1e-12);
    }

    #[test]
    fn compose_with_identity() {
        let p = Pose::new(Vector3::new(0.1, -0.2, 0.3), Rotation::about_x(0.4));
        assert!(pose_close(&compose(&p, &Pose::identity()), &p, 1e-15));
        assert!(pose_close(&compose(&Pose::identity(), &p), &p, 1e-15));
    }

    #[test]
    fn translate_then_rotate_moves_origin() {
        // Rotate by π/2 about z after translating along x.
        let t = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let r = Pose::from_rotation(Rotation::about_z(FRAC_PI_2));
        let p = compose(&r, &t).transform_point(&Vector3::zeros());
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn invert_identity_and_translation() {
        assert!(pose_close(&invert(&Pose::identity()), &Pose::identity(), 0.0 + 1e-15));
        let t = Vector3::new(0.3, -0.1, 2.0);
        let inv = invert(&Pose::from_translation(t));
        assert!((inv.position + t).norm() < 1e-15);
        assert!(rotation_angle(&inv.rotation) < 1e-15);
    }

    #[test]
    fn rotation_vector_round_trip() {
        let v = Vector3::new(0.3, -1.2, 0.5);
        let back = Rotation::from_rotation_vector(v).to_rotation_vector();
        assert!((v - back).norm() < 1e-12);
        assert_eq!(Rotation::identity().to_rotation_vector(), Vector3::zeros());
    }

    #[test]
    fn pose_serde_rejects_zero_quaternion() {
        let bad = r#"{"position":[0,0,0],"quaternion":[0,0,0,0]}"#;
        assert!(serde_json::from_str::<Pose>(bad).is_err());
    }

    fn arb_rotation() -> impl Strategy<Value = Rotation> {
        (prop::array::uniform3(-1.0f64..1.0), 0.0f64..PI)
            .prop_map(|(a, angle)| Rotation::from_axis_angle(Vector3::from(a), angle))
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-2.0f64..2.0), arb_rotation())
            .prop_map(|(p, r)| Pose::new(Vector3::from(p), r))
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(p in arb_pose()) {
            let back: Pose = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            prop_assert_eq!(back.position, p.position);
            prop_assert_eq!(back.rotation.to_wxyz(), p.rotation.to_wxyz());
        }

        #[test]
        fn compose_with_inverse_is_identity(p in arb_pose()) {
            prop_assert!(pose_close(&compose(&p, &invert(&p)), &Pose::identity(), 1e-9));
        }

        #[test]
        fn double_inverse(p in arb_pose()) {
            prop_assert!(pose_close(&invert(&invert(&p)), &p, 1e-9));
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!(pose_close(&left, &right, 1e-9));
        }

        #[test]
        fn angle_invariant_under_conjugation(q in arb_rotation(), r in arb_rotation()) {
            let conj = q * r * q.inverse();
            prop_assert!((rotation_angle(&conj) - rotation_angle(&r)).abs() < 1e-9);
        }

        #[test]
        fn angle_matches_trace_and_inverse(r in arb_rotation()) {
            prop_assert!((rotation_angle(&r) - rotation_angle(&r.inverse())).abs() < 1e-12);
            // The trace route loses precision near 0 and π.
            prop_assert!((rotation_angle(&r) - trace_angle(&r)).abs() < 1e-6);
        }

        #[test]
        fn rotations_stay_orthonormal(a in arb_rotation(), b in arb_rotation()) {
            let m = (a * b).matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
