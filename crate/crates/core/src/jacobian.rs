//! Online fitting of the local feature Jacobian.
//!
//! Given pose deltas `B` (6 × N) and feature deltas `E` (m × N) with matching
//! columns, `J` is the minimum-residual solution of `J·B = E`, equal to the
//! right-inverse form `E·Bᵀ·(B·Bᵀ)⁻¹`. The solve runs through an SVD of `Bᵀ`
//! rather than forming `B·Bᵀ`, which would square the condition number.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rendering::{FeatureVector, MIN_TRACKED_FEATURES};
use crate::sampling::RANK_TOLERANCE;

/// Columns `x_ref − x_i` of feature differences, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDeltaMatrix(pub DMatrix<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedJacobian {
    /// m × 6, pixels per unit pose parameter.
    pub j: DMatrix<f64>,
    /// `‖J·B − E‖_F`.
    pub residual_norm: f64,
    /// Condition number of `B`.
    pub condition: f64,
}

pub fn build_feature_deltas(
    reference: &FeatureVector,
    samples: &[FeatureVector],
) -> Result<FeatureDeltaMatrix> {
    let m = reference.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: bad.len(),
        });
    }
    Ok(FeatureDeltaMatrix(DMatrix::from_fn(
        m,
        samples.len(),
        |r, c| reference.0[r] - samples[c].0[r],
    )))
}

pub fn learn_jacobian(e: &FeatureDeltaMatrix, b: &DMatrix<f64>) -> Result<LearnedJacobian> {
    let e = &e.0;
    if b.nrows() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            found: b.nrows(),
        });
    }
    if e.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            found: e.ncols(),
        });
    }
    if e.nrows() < 2 * MIN_TRACKED_FEATURES {
        return Err(Error::InsufficientFeatures {
            found: e.nrows() / 2,
            required: MIN_TRACKED_FEATURES,
        });
    }
    if b.ncols() < 6 {
        return Err(Error::RankDeficientBatch {
            smallest: 0.0,
            largest: b.norm(),
        });
    }

    let svd = b.transpose().svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if !(smallest > RANK_TOLERANCE * largest) {
        return Err(Error::RankDeficientBatch { smallest, largest });
    }
    let jt = svd
        .solve(&e.transpose(), 0.0)
        .map_err(|msg| Error::Degenerate(msg.to_string()))?;
    let j = jt.transpose();
    let residual_norm = (&j * b - e).norm();
    Ok(LearnedJacobian {
        j,
        residual_norm,
        condition: largest / smallest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// The explicit right-inverse formula.
    fn right_inverse_oracle(e: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        e * b.transpose() * (b * b.transpose()).try_inverse().unwrap()
    }

    fn fv(v: Vec<f64>) -> FeatureVector {
        FeatureVector(DVector::from_vec(v))
    }

    #[test]
    fn identical_samples_give_zero_deltas() {
        let x = fv((0..8).map(|i| i as f64).collect());
        let e = build_feature_deltas(&x, &[x.clone(), x.clone()]).unwrap();
        assert_eq!(e.0, DMatrix::zeros(8, 2));
    }

    #[test]
    fn zero_sample_gives_reference_column() {
        let e = build_feature_deltas(&fv(vec![1.0; 8]), &[fv(vec![0.0; 8])]).unwrap();
        assert_eq!(e.0, DMatrix::from_element(8, 1, 1.0));
    }

    #[test]
    fn deltas_match_elementwise_subtraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = (0..10).map(|_| rng.random_range(-100.0..100.0)).collect();
        let samples: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..10).map(|_| rng.random_range(-100.0..100.0)).collect())
            .collect();
        let e = build_feature_deltas(
            &fv(r.clone()),
            &samples.iter().cloned().map(fv).collect::<Vec<_>>(),
        )
        .unwrap();
        for (c, s) in samples.iter().enumerate() {
            for row in 0..10 {
                assert_eq!(e.0[(row, c)], r[row] - s[row]);
            }
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = build_feature_deltas(&fv(vec![0.0; 8]), &[fv(vec![0.0; 10])]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 8,
                found: 10
            }
        );
    }

    #[test]
    fn exact_linear_model_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(8, 6, &mut rng) * 500.0;
        for n in [6, 12, 24, 100] {
            let b = random_matrix(6, n, &mut rng) * 0.01;
            let learned = learn_jacobian(&FeatureDeltaMatrix(&a * &b), &b).unwrap();
            assert!((&learned.j - &a).abs().max() <= 1e-9, "n = {n}");
            assert!(learned.residual_norm < 1e-9);
        }
    }

    #[test]
    fn zero_deltas_give_zero_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(6, 24, &mut rng);
        let learned = learn_jacobian(&FeatureDeltaMatrix(DMatrix::zeros(8, 24)), &b).unwrap();
        assert_eq!(learned.j, DMatrix::zeros(8, 6));
    }

    #[test]
    fn rank_deficient_batch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut b = random_matrix(6, 24, &mut rng);
        let row = b.row(0).clone_owned();
        b.row_mut(5).copy_from(&(row * 2.0));
        let e = FeatureDeltaMatrix(random_matrix(8, 24, &mut rng));
        assert!(matches!(
            learn_jacobian(&e, &b),
            Err(Error::RankDeficientBatch { .. })
        ));
        let b = random_matrix(6, 4, &mut rng);
        let e = FeatureDeltaMatrix(random_matrix(8, 4, &mut rng));
        assert!(matches!(
            learn_jacobian(&e, &b),
            Err(Error::RankDeficientBatch { .. })
        ));
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_matrix(6, 24, &mut rng);
        let e = FeatureDeltaMatrix(random_matrix(8, 20, &mut rng));
        assert!(matches!(
            learn_jacobian(&e, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        let b5 = random_matrix(5, 24, &mut rng);
        let e = FeatureDeltaMatrix(random_matrix(8, 24, &mut rng));
        assert!(matches!(
            learn_jacobian(&e, &b5),
            Err(Error::DimensionMismatch { .. })
        ));
        let e6 = FeatureDeltaMatrix(random_matrix(6, 24, &mut rng));
        assert!(matches!(
            learn_jacobian(&e6, &b),
            Err(Error::InsufficientFeatures { .. })
        ));
    }

    proptest! {
        #[test]
        fn svd_solve_matches_right_inverse(seed in any::<u64>(), n in 12usize..60, m in 4usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_matrix(6, n, &mut rng) * 0.01;
            let e = random_matrix(2 * m, n, &mut rng) * 10.0;
            let learned = learn_jacobian(&FeatureDeltaMatrix(e.clone()), &b).unwrap();
            let oracle = right_inverse_oracle(&e, &b);
            prop_assert!((&learned.j - &oracle).norm() / oracle.norm() <= 1e-8);
        }

        #[test]
        fn common_column_scaling_leaves_jacobian_unchanged(seed in any::<u64>(), scale in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_matrix(6, 24, &mut rng);
            let e = random_matrix(8, 24, &mut rng);
            let j1 = learn_jacobian(&FeatureDeltaMatrix(e.clone()), &b).unwrap().j;
            let j2 = learn_jacobian(&FeatureDeltaMatrix(e * scale), &(b * scale)).unwrap().j;
            prop_assert!((&j1 - &j2).abs().max() <= 1e-10 * j1.abs().max().max(1.0));
        }
    }
}
