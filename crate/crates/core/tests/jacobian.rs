mod common;

use common::{delta_sign, expected_learned_jacobian, pose, square, LinearRenderer};
use drpose::jacobian::{build_feature_deltas, learn_jacobian, LearnedJacobian};
use drpose::rendering::{common_features, CameraIntrinsics, PinholeRenderer, Renderer};
use drpose::sampling::{sample_batch, SamplerConfig};
use drpose::Pose;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn learn_at<R: Renderer>(
    renderer: &R,
    reference: &Pose,
    config: &SamplerConfig,
) -> LearnedJacobian {
    let batch = sample_batch(reference, config, 0).unwrap();
    let mut obs = vec![renderer.render(reference)];
    obs.extend(batch.poses.iter().map(|p| renderer.render(p)));
    let common = common_features(&obs[0], &obs[1..]).unwrap();
    let deltas = build_feature_deltas(&common.reference, &common.others).unwrap();
    learn_jacobian(&deltas, &batch.b).unwrap()
}

fn radii(r: f64) -> SamplerConfig {
    SamplerConfig {
        theta_max: r,
        cap_half_angle: PI,
        translation_half_widths: [r; 3],
        ..SamplerConfig::default()
    }
}

#[test]
fn linear_model_is_learned_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = DMatrix::from_fn(8, 6, |_, _| rng.random_range(-500.0..500.0));
    let c = DVector::from_fn(8, |_, _| rng.random_range(0.0..400.0));
    let renderer = LinearRenderer::new(a.clone(), c);
    let reference = pose([0.0; 3], [0.1, -0.2, 5.0]);
    for seed in 0..10 {
        let config = SamplerConfig {
            seed,
            ..radii(0.01)
        };
        let learned = learn_at(&renderer, &reference, &config);
        let truth = &a * delta_sign();
        assert!((&learned.j - &truth).abs().max() <= 1e-9, "seed {seed}");
    }
}

fn pinhole_error(r: f64) -> f64 {
    let model = square(1.0);
    let k = CameraIntrinsics::default();
    let reference = pose([0.0; 3], [0.0, 0.0, 5.0]);
    let renderer = PinholeRenderer::new(model.clone(), k);
    let learned = learn_at(&renderer, &reference, &radii(r));
    let truth = expected_learned_jacobian(&model, &reference, &k);
    (&learned.j - &truth).norm() / truth.norm()
}

#[test]
fn pinhole_jacobian_matches_chain_rule() {
    assert!(pinhole_error(0.005) < 0.02);
}

#[test]
fn pinhole_error_shrinks_with_sampling_radius() {
    let errors: Vec<f64> = [0.05, 0.02, 0.01, 0.005]
        .iter()
        .map(|&r| pinhole_error(r))
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
}
