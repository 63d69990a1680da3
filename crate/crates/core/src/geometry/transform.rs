use nalgebra::{Matrix3, Point3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RIGIDITY_TOL: f64 = 1e-9;

/// Proper rigid motion `x -> R x + t`, in millimeters.
///
/// Construction checks that `R` is orthonormal with determinant one, so every
/// value of this type can be composed and inverted without drift checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseFile", try_from = "PoseFile")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let det = rotation.determinant();
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let finite = rotation.iter().chain(translation.iter()).all(|v| v.is_finite());
        if !finite || (det - 1.0).abs() > RIGIDITY_TOL || orth > RIGIDITY_TOL {
            return Err(Error::NonRigid { det, orth });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized), then translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle in radians of the rotation taking `self`'s orientation to `other`'s.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// On-disk pose layout: unit quaternion `(w, x, y, z)` plus translation in mm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseFile {
    pub rotation_wxyz: [f64; 4],
    pub translation_mm: [f64; 3],
}

impl From<RigidTransform> for PoseFile {
    fn from(t: RigidTransform) -> Self {
        let q = t.quaternion();
        // canonical hemisphere so equal rotations serialize identically
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        PoseFile {
            rotation_wxyz: [q.w, q.i, q.j, q.k],
            translation_mm: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<PoseFile> for RigidTransform {
    type Error = Error;

    fn try_from(f: PoseFile) -> Result<Self> {
        let [w, x, y, z] = f.rotation_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "pose quaternion must have unit norm, found {norm}"
            )));
        }
        let t = Vector3::from(f.translation_mm);
        RigidTransform::new(
            *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix(),
            t,
        )
    }
}
