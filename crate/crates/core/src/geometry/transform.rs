use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Vec3 = Vector3<f64>;

/// Rigid motion `x -> R x + t`.
///
/// The rotation is kept as a unit quaternion with a non-negative scalar part
/// so that equal rotations compare (and serialize) equal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub(crate) fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle))
    }

    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vec3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Builds from `[w, x, y, z]` and `[x, y, z]`, renormalizing the quaternion.
    pub fn from_parts(q: [f64; 4], t: [f64; 3]) -> Self {
        let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::new(quat, Vec3::new(t[0], t[1], t[2]))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform::new(inv, -(inv * self.translation))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn with_translation(&self, translation: Vec3) -> RigidTransform {
        RigidTransform::new(self.rotation, translation)
    }

    /// Geodesic angle between the two rotations, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        geodesic_angle(&self.rotation, &other.rotation)
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation.quaternion();
        q.coords.iter().all(|c| c.is_finite()) && self.translation.iter().all(|c| c.is_finite())
    }
}

/// Plain SO(3) geodesic distance `2 acos(|q1 · q2|)`, evaluated through
/// `atan2` on the relative rotation so that small angles stay accurate.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = a.inverse() * b;
    let q = rel.quaternion();
    2.0 * q.vector().norm().atan2(q.w.abs())
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            q: self.quaternion_wxyz(),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let norm = repr.q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(serde::de::Error::custom("quaternion must be non-zero"));
        }
        if (norm - 1.0).abs() < 1e-12 {
            // already unit: keep the stored digits so files round-trip exactly
            let q = UnitQuaternion::new_unchecked(Quaternion::new(repr.q[0], repr.q[1], repr.q[2], repr.q[3]));
            return Ok(RigidTransform::new(q, Vec3::new(repr.t[0], repr.t[1], repr.t[2])));
        }
        Ok(RigidTransform::from_parts(repr.q, repr.t))
    }
}
