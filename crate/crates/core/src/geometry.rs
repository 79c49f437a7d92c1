//! Core 3D types: point clouds, rigid transforms and Euler angles.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::descriptors::Descriptors;
use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ordered 3D points with optional per-point descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    descriptors: Option<Descriptors>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint(i));
        }
        Ok(Self {
            points,
            descriptors: None,
        })
    }

    pub fn from_slices(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    pub fn with_descriptors(mut self, descriptors: Descriptors) -> Result<Self> {
        if descriptors.len() != self.points.len() {
            return Err(Error::DescriptorCountMismatch {
                descriptors: descriptors.len(),
                points: self.points.len(),
            });
        }
        self.descriptors = Some(descriptors);
        Ok(self)
    }

    pub fn without_descriptors(mut self) -> Self {
        self.descriptors = None;
        self
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn descriptors(&self) -> Option<&Descriptors> {
        self.descriptors.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Result<Vector3<f64>> {
        centroid(&self.points)
    }

    /// Keeps the points at `indices`, in that order, along with their descriptors.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            descriptors: self.descriptors.as_ref().map(|d| d.select(indices)),
        }
    }

    pub(crate) fn from_parts(points: Vec<Vector3<f64>>, descriptors: Option<Descriptors>) -> Self {
        Self {
            points,
            descriptors,
        }
    }
}

pub fn centroid(points: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
    Ok(sum / points.len() as f64)
}

/// A proper rigid motion `x -> R x + t` with `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1 (within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!("det(R) = {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), translation)
    }

    pub fn from_euler(angles: EulerAngles, translation: Vector3<f64>) -> Self {
        Self::from_parts(angles.to_rotation(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn euler(&self) -> EulerAngles {
        EulerAngles::from_rotation(&self.rotation)
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Transforms every point; descriptors are carried over unchanged.
    pub fn apply(&self, pc: &PointCloud) -> PointCloud {
        PointCloud::from_parts(
            pc.points().iter().map(|p| self.apply_point(p)).collect(),
            pc.descriptors().cloned(),
        )
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self::from_parts(rt, -(rt * self.translation))
    }

    /// Largest absolute entry difference over rotation and translation.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.rotation - other.rotation)
            .amax()
            .max((self.translation - other.translation).amax())
    }
}

/// Intrinsic Z-Y-X Euler angles in degrees: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
///
/// Away from gimbal lock, yaw and roll lie in (-180°, 180°] and pitch in
/// [-90°, 90°]. At |pitch| = 90° roll is pinned to 0 and the remaining
/// freedom is folded into yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn to_rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self)
    }

    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        euler_from_rotation(r)
    }

    /// Angles as `[roll (x), pitch (y), yaw (z)]`.
    pub fn as_xyz(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

pub fn rotation_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_from_euler(e: &EulerAngles) -> Matrix3<f64> {
    rotation_z(e.yaw) * rotation_y(e.pitch) * rotation_x(e.roll)
}

/// Gimbal lock is declared when |pitch| is within this many degrees of 90°.
const GIMBAL_LOCK_DEG: f64 = 1e-9;

pub fn euler_from_rotation(r: &Matrix3<f64>) -> EulerAngles {
    let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
    let pitch = (-r[(2, 0)]).atan2(cos_pitch);
    if cos_pitch < GIMBAL_LOCK_DEG.to_radians().sin() {
        // Only yaw - roll (pitch = +90) or yaw + roll (pitch = -90) is observable.
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        let pitch = if r[(2, 0)] < 0.0 { 90.0 } else { -90.0 };
        return EulerAngles::new(yaw.to_degrees(), pitch, 0.0);
    }
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    EulerAngles::new(yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
}

/// Draws per-axis Euler angles (degrees) uniformly from `rot_range_deg` and
/// per-axis translation components uniformly from `trans_range`.
///
/// Panics if either range has `lo > hi`.
pub fn sample_random_transform<R: Rng + ?Sized>(
    rng: &mut R,
    rot_range_deg: [f64; 2],
    trans_range: [f64; 2],
) -> RigidTransform {
    assert!(rot_range_deg[0] <= rot_range_deg[1], "rotation range is not ordered");
    assert!(trans_range[0] <= trans_range[1], "translation range is not ordered");
    let mut draw = |range: [f64; 2]| rng.random_range(range[0]..=range[1]);
    let roll = draw(rot_range_deg);
    let pitch = draw(rot_range_deg);
    let yaw = draw(rot_range_deg);
    let t = Vector3::new(draw(trans_range), draw(trans_range), draw(trans_range));
    RigidTransform::from_euler(EulerAngles::new(yaw, pitch, roll), t)
}
