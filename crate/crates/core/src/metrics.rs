//! Pose error metrics: Euclidean translation error and the rotation angle
//! needed to align two orientations.

use nalgebra::Vector3;

use crate::geometry::{Pose, RotationMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Scene length units.
    pub translation_error: f64,
    /// Degrees, in `[0, 180]`.
    pub rotation_error: f64,
}

pub fn translation_error(t: &Vector3<f64>, t_hat: &Vector3<f64>) -> f64 {
    (t - t_hat).norm()
}

/// `acos((tr(Rᵀ R̂) − 1) / 2)` in degrees.
///
/// The trace is the Frobenius inner product of the two matrices, summed in a
/// fixed order so the result is exactly symmetric in its arguments. The
/// cosine is clamped to `[−1, 1]`.
pub fn rotation_error(r: &RotationMatrix, r_hat: &RotationMatrix) -> f64 {
    let (a, b) = (r.matrix(), r_hat.matrix());
    let mut trace = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            trace += a[(i, j)] * b[(i, j)];
        }
    }
    let cos = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

pub fn pose_error(truth: &Pose, estimate: &Pose) -> PoseError {
    PoseError {
        translation_error: translation_error(&truth.translation, &estimate.translation),
        rotation_error: rotation_error(&truth.rotation(), &estimate.rotation()),
    }
}
