//! Attitude and pose algebra built on Gibbs vectors.
//!
//! A Gibbs vector `q = tan(θ/2)·ê` maps to a direction cosine matrix through
//! the Cayley transform `R = (I + [q×])⁻¹ (I − [q×])`, evaluated here with the
//! closed form
//!
//! ```text
//! R = ((1 − qᵀq) I + 2 q qᵀ − 2 [q×]) / (1 + qᵀq)
//! ```
//!
//! `R` maps object-frame coordinates into the camera frame (`b = R a + t`).
//! With this convention `R(q)` equals `exp(−θ [ê×])`, so a Gibbs vector along
//! `+ê` is the frame rotation about `ê`. Rotation angles, and therefore all
//! error metrics, are convention free.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};

/// Maximum absolute deviation allowed in `RᵀR − I` and `det R − 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

/// `1 + trace(R)` below this margin is treated as a rotation at (or too close
/// to) π, where the Gibbs vector is unbounded.
pub const NEAR_PI_TRACE_MARGIN: f64 = 1e-6;

/// Six-vector `[Δq Δt]` relating two poses.
pub type PoseDelta = Vector6<f64>;

/// Classical Rodrigues parameters `q = tan(θ/2)·ê`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsVector(pub Vector3<f64>);

impl GibbsVector {
    pub fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self(Vector3::new(q1, q2, q3))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    /// Gibbs vector of a rotation of `angle` radians about the unit `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self(axis * (angle / 2.0).tan())
    }

    /// Rotation angle `2·atan(‖q‖)` in `[0, π)`.
    pub fn angle(&self) -> f64 {
        2.0 * self.0.norm().atan()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        crp_to_rotation(self)
    }
}

/// A proper orthogonal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    /// Validates orthogonality and unit determinant within
    /// [`ROTATION_TOLERANCE`]. The matrix is never re-orthonormalized.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !(orthogonality <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(Error::InvalidRotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Product of two rotations. Unchecked: the product of two valid
    /// rotations drifts from orthogonality only at rounding level.
    pub fn compose(&self, rhs: &RotationMatrix) -> Self {
        Self(self.0 * rhs.0)
    }

    pub fn to_crp(&self) -> Result<GibbsVector> {
        rotation_to_crp(self)
    }
}

impl std::ops::Mul<Vector3<f64>> for &RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Orientation and translation of the target relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub orientation: GibbsVector,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(orientation: GibbsVector, translation: Vector3<f64>) -> Self {
        Self {
            orientation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(GibbsVector::zero(), Vector3::zeros())
    }

    pub fn rotation(&self) -> RotationMatrix {
        crp_to_rotation(&self.orientation)
    }

    /// The raw parameter vector `[q t]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        let q = &self.orientation.0;
        let t = &self.translation;
        Vector6::new(q.x, q.y, q.z, t.x, t.y, t.z)
    }

    pub fn from_vector(p: &Vector6<f64>) -> Self {
        Self::new(
            GibbsVector::new(p[0], p[1], p[2]),
            Vector3::new(p[3], p[4], p[5]),
        )
    }
}

/// Skew-symmetric cross-product matrix: `skew(v) · w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Closed-form Cayley transform of a Gibbs vector.
pub fn crp_to_rotation(q: &GibbsVector) -> RotationMatrix {
    let q = &q.0;
    let qq = q.dot(q);
    let m =
        (Matrix3::identity() * (1.0 - qq) + q * q.transpose() * 2.0 - skew(q) * 2.0) / (1.0 + qq);
    RotationMatrix(m)
}

/// Inverse Cayley transform. Fails when `1 + trace(R) ≤ 1e-6`, i.e. for
/// rotations at or within a hair of π.
pub fn rotation_to_crp(r: &RotationMatrix) -> Result<GibbsVector> {
    let m = &r.0;
    let trace = m.trace();
    let denom = 1.0 + trace;
    if denom <= NEAR_PI_TRACE_MARGIN {
        return Err(Error::NearSingularRotation { trace });
    }
    // R − Rᵀ = −(1 + tr R)·[q×]
    Ok(GibbsVector::new(
        (m[(1, 2)] - m[(2, 1)]) / denom,
        (m[(2, 0)] - m[(0, 2)]) / denom,
        (m[(0, 1)] - m[(1, 0)]) / denom,
    ))
}

/// `[Δq Δt]` with `Δq = crp(R_refᵀ R_other)` and `Δt = t_ref − t_other`.
pub fn pose_difference(reference: &Pose, other: &Pose) -> Result<PoseDelta> {
    let relative = reference.rotation().transpose().compose(&other.rotation());
    let dq = rotation_to_crp(&relative)?;
    let dt = reference.translation - other.translation;
    Ok(Vector6::new(dq.0.x, dq.0.y, dq.0.z, dt.x, dt.y, dt.z))
}

/// Additive update of the raw `[q t]` vector.
///
/// Exact for translation. For orientation the sum of Gibbs vectors agrees with
/// rotation composition only to first order around `q = 0`.
pub fn apply_pose_delta(base: &Pose, delta: &PoseDelta) -> Result<Pose> {
    let updated = Pose::from_vector(&(base.to_vector() + delta));
    let qq = updated.orientation.0.norm_squared();
    // 1 + trace(R(q)) = 4 / (1 + qᵀq)
    let margin = 4.0 / (1.0 + qq);
    if !updated.orientation.is_finite() || !(margin > NEAR_PI_TRACE_MARGIN) {
        return Err(Error::NearSingularRotation {
            trace: margin - 1.0,
        });
    }
    Ok(updated)
}
