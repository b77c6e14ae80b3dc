#![allow(dead_code)]

use drpose::geometry::{skew, Pose};
use drpose::rendering::{
    CameraIntrinsics, Feature, FeatureObservation, Keypoint, Renderer, TargetModel,
};
use nalgebra::{DMatrix, DVector, Matrix2x3, Vector3, Vector6};

/// Features that are an exact affine function of the pose vector `[q t]`.
pub struct LinearRenderer {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearRenderer {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert_eq!(a.ncols(), 6);
        assert_eq!(a.nrows() % 2, 0);
        Self { a, c }
    }

    pub fn features(&self, pose: &Pose) -> DVector<f64> {
        &self.a * pose.to_vector() + &self.c
    }
}

impl Renderer for LinearRenderer {
    fn render(&self, pose: &Pose) -> FeatureObservation {
        let x = self.features(pose);
        FeatureObservation {
            entries: (0..x.len() / 2)
                .map(|i| Feature {
                    id: i as u32,
                    u: x[2 * i],
                    v: x[2 * i + 1],
                    visible: true,
                })
                .collect(),
        }
    }
}

/// Jacobian of `(u, v)` with respect to the camera-frame point `b`.
pub fn projection_jacobian(b: &Vector3<f64>, k: &CameraIntrinsics) -> Matrix2x3<f64> {
    let z = b.z;
    Matrix2x3::new(
        k.fx / z,
        k.gamma / z,
        -(k.fx * b.x + k.gamma * b.y) / (z * z),
        0.0,
        k.fy / z,
        -k.fy * b.y / (z * z),
    )
}

/// Analytic Jacobian of stacked features (ascending id) with respect to a
/// pose perturbation `(R·ΔR(δq), t + δt)` at `δ = 0`.
///
/// With `ΔR ≈ I − 2[δq×]`, the point moves by `2R[a×]δq + δt`.
pub fn perturbation_jacobian(
    model: &TargetModel,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> DMatrix<f64> {
    let r = *pose.rotation().matrix();
    let mut j = DMatrix::zeros(2 * model.len(), 6);
    for (i, Keypoint { position: a, .. }) in model.keypoints().iter().enumerate() {
        let b = r * a + pose.translation;
        let p = projection_jacobian(&b, k);
        let dq = p * (2.0 * r * skew(a));
        j.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&dq);
        j.fixed_view_mut::<2, 3>(2 * i, 3).copy_from(&p);
    }
    j
}

/// The matrix a learned Jacobian should approach: it maps stored pose deltas
/// `(crp(R_refᵀR_i), t_ref − t_i)` to feature deltas `x_ref − x_i`, both of
/// which are negated perturbations in rotation and translation.
pub fn expected_learned_jacobian(
    model: &TargetModel,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> DMatrix<f64> {
    let mut j = perturbation_jacobian(model, pose, k);
    j.columns_mut(0, 3).neg_mut();
    j
}

/// `diag(−1, −1, −1, 1, 1, 1)`: maps `p_ref − p_i` to the stored delta when the
/// reference orientation is the identity.
pub fn delta_sign() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(&[
        -1.0, -1.0, -1.0, 1.0, 1.0, 1.0,
    ]))
}

pub fn pose(q: [f64; 3], t: [f64; 3]) -> Pose {
    Pose::from_vector(&Vector6::new(q[0], q[1], q[2], t[0], t[1], t[2]))
}

/// Four coplanar points forming a square of side `side`.
pub fn square(side: f64) -> TargetModel {
    let h = side / 2.0;
    TargetModel::from_points(&[
        Vector3::new(-h, -h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(-h, h, 0.0),
    ])
    .unwrap()
}

/// Rodrigues' formula `exp(θ [ê×])`.
pub fn axis_angle_matrix(axis: &Vector3<f64>, angle: f64) -> nalgebra::Matrix3<f64> {
    let k = skew(axis);
    nalgebra::Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// `(I + [q×])⁻¹ (I − [q×])`.
pub fn cayley_form(q: &Vector3<f64>) -> nalgebra::Matrix3<f64> {
    let k = skew(q);
    let id = nalgebra::Matrix3::identity();
    (id + k).try_inverse().unwrap() * (id - k)
}

/// Uniform unit vector by rejection from the cube.
pub fn random_unit(rng: &mut impl rand::Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
