//! The outer estimation loop.
//!
//! Each iteration renders the current guess, matches its features against the
//! reference observation, samples a perturbation batch around the guess,
//! renders every sample, refits the local Jacobian and takes a damped
//! Levenberg-Marquardt step:
//!
//! ```text
//! δp = (JᵀJ + λ·diag(JᵀJ))⁻¹ Jᵀ (x̃ − h(p̂))
//! ```
//!
//! A step is accepted only if it strictly lowers the squared feature residual.
//! Accepting divides λ by ten, rejecting multiplies it by ten (both factors
//! configurable) and retries with the same Jacobian, up to
//! [`MAX_REJECTIONS`] times. The loop stops once `‖δp‖ < ε`.
//!
//! # Step direction
//!
//! The batch columns pair `Δx = x_guess − x_sample` with
//! `Δp = [crp(R_guessᵀ R_sample), t_guess − t_sample]`. The translation and
//! feature parts both run from sample to guess, while the rotation part runs
//! from guess to sample. Solving `J δp = x̃ − h(p̂)` therefore yields a
//! translation step pointing toward the reference but a rotation step pointing
//! away from it. The rotation block of `δp` is negated before the additive
//! pose update so both blocks move toward the reference.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose_delta, Pose, PoseDelta};
use crate::jacobian::{build_feature_deltas, learn_jacobian, LearnedJacobian};
use crate::metrics::pose_error;
use crate::parallel;
use crate::rendering::{common_features, FeatureObservation, FeatureVector, Renderer};
use crate::sampling::{sample_batch, shrink, SamplerConfig};

/// Consecutive rejected steps tolerated within one outer iteration.
pub const MAX_REJECTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Convergence threshold on `‖δp‖` (mixed units).
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Conservative re-initializations allowed per solve.
    pub max_reinits: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            epsilon: 1e-6,
            max_iterations: 50,
            max_reinits: 5,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidConfig("lambda0 > 0".into()));
        }
        self.validate_for_solve()
    }

    /// Like [`validate`](Self::validate) but admits `lambda0 = 0`, which
    /// makes the first step a pure Gauss-Newton step.
    fn validate_for_solve(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return fail("lambda0 >= 0");
        }
        if !(self.lambda_up > 1.0 && self.lambda_up.is_finite()) {
            return fail("lambda_up > 1");
        }
        if !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return fail("0 < lambda_down < 1");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon > 0");
        }
        if self.max_iterations == 0 {
            return fail("max_iterations > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Pose at the end of the iteration.
    pub pose: Pose,
    /// Squared feature residual at `pose`, px².
    pub cost: f64,
    /// Norm of the last step computed this iteration.
    pub step_norm: f64,
    /// Damping after this iteration's adaptation.
    pub lambda: f64,
    pub cond_b: f64,
    pub k_features: usize,
    pub rotation_error_deg: Option<f64>,
    pub translation_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Every damped step in an iteration raised the cost.
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub pose: Pose,
    pub converged: bool,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    /// Cost at the initial guess.
    pub initial_cost: f64,
    pub reinitializations: usize,
    /// Sampler configuration in force at the end, after any shrinking.
    pub final_sampler: SamplerConfig,
}

impl SolveResult {
    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(self.initial_cost, |r| r.cost)
    }

    pub fn accepted_steps(&self) -> &[IterationRecord] {
        accepted_steps(&self.records, self.termination)
    }
}

/// Records of accepted steps. Every iteration appends one record; a run that
/// ends converged or stalled appends a final record without moving the pose.
pub fn accepted_steps(records: &[IterationRecord], termination: Termination) -> &[IterationRecord] {
    match termination {
        Termination::MaxIterations => records,
        Termination::Converged | Termination::Stalled => {
            &records[..records.len().saturating_sub(1)]
        }
    }
}

/// Squared Euclidean norm of `reference − current`.
pub fn cost(reference: &FeatureVector, current: &FeatureVector) -> Result<f64> {
    if reference.len() != current.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: current.len(),
        });
    }
    Ok((&reference.0 - &current.0).norm_squared())
}

/// Solves `(JᵀJ + λ·diag(JᵀJ)) δp = Jᵀ r`.
pub fn lm_step(j: &DMatrix<f64>, residual: &DVector<f64>, lambda: f64) -> Result<PoseDelta> {
    if j.ncols() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            found: j.ncols(),
        });
    }
    if residual.len() != j.nrows() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            found: residual.len(),
        });
    }
    let jt = j.transpose();
    let jtj: Matrix6<f64> = (&jt * j).fixed_view::<6, 6>(0, 0).into_owned();
    let g: Vector6<f64> = (&jt * residual).fixed_rows::<6>(0).into_owned();
    // A zero diagonal entry is an unobservable pose direction.
    if (0..6).any(|i| !(jtj[(i, i)] > 0.0)) {
        return Err(Error::SingularNormalEquations);
    }
    let mut damped = jtj;
    for i in 0..6 {
        damped[(i, i)] += lambda * jtj[(i, i)];
    }
    let step = damped
        .cholesky()
        .ok_or(Error::SingularNormalEquations)?
        .solve(&g);
    if !step.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularNormalEquations);
    }
    Ok(step)
}

/// Converts a damped step into the additive `[q t]` update that moves the
/// pose toward the reference. See the module documentation.
fn step_to_update(step: &PoseDelta) -> PoseDelta {
    Vector6::new(-step[0], -step[1], -step[2], step[3], step[4], step[5])
}

/// Estimates the pose at which `renderer` reproduces `reference`.
///
/// `ground_truth` only fills the diagnostic error fields of the records.
pub fn estimate_pose<R: Renderer + ?Sized>(
    renderer: &R,
    reference: &FeatureObservation,
    initial_guess: &Pose,
    sampler: &SamplerConfig,
    lm: &LmConfig,
    ground_truth: Option<&Pose>,
) -> Result<SolveResult> {
    sampler.validate()?;
    lm.validate_for_solve()?;

    let initial =
        common_features(reference, &[renderer.render(initial_guess)]).map_err(|e| match e {
            Error::InsufficientFeatures { found, .. } => {
                Error::InitialGuessInfeasible { common: found }
            }
            other => other,
        })?;
    let initial_cost = cost(&initial.reference, &initial.others[0])?;

    let mut pose = *initial_guess;
    let mut lambda = lm.lambda0;
    let mut sampler = *sampler;
    let mut reinits = 0;
    let mut records = Vec::new();

    let record = |iteration, pose: Pose, cost, step_norm, lambda, learned: &LearnedJacobian, k| {
        let err = ground_truth.map(|gt| pose_error(gt, &pose));
        IterationRecord {
            iteration,
            pose,
            cost,
            step_norm,
            lambda,
            cond_b: learned.condition,
            k_features: k,
            rotation_error_deg: err.map(|e| e.rotation_error),
            translation_error: err.map(|e| e.translation_error),
        }
    };
    let finish = |pose, termination, records, reinits, sampler| SolveResult {
        pose,
        converged: termination == Termination::Converged,
        termination,
        records,
        initial_cost,
        reinitializations: reinits,
        final_sampler: sampler,
    };

    for iteration in 1..=lm.max_iterations {
        let guess_obs = renderer.render(&pose);
        if let Err(e) = common_features(reference, std::slice::from_ref(&guess_obs)) {
            return Err(Error::Degenerate(format!(
                "guess lost track of the reference: {e}"
            )));
        }

        let mut attempt = 0u64;
        let (common, batch) = loop {
            let stream = ((iteration as u64) << 16) | attempt;
            let batch = sample_batch(&pose, &sampler, stream).map_err(|e| match e {
                Error::DegenerateBatch { .. } => Error::Degenerate(e.to_string()),
                other => other,
            })?;
            let mut observations = Vec::with_capacity(batch.len() + 1);
            observations.push(guess_obs.clone());
            observations.extend(parallel::map(&batch.poses, |p| renderer.render(p)));
            match common_features(reference, &observations) {
                Ok(common) => break (common, batch),
                Err(Error::InsufficientFeatures { found, .. }) => {
                    if reinits >= lm.max_reinits {
                        return Err(Error::Degenerate(format!(
                            "only {found} features tracked after {reinits} re-initializations"
                        )));
                    }
                    reinits += 1;
                    sampler = shrink(&sampler);
                    attempt += 1;
                    log::info!(
                        "iteration {iteration}: {found} features tracked, re-initializing with theta_max {:e}",
                        sampler.theta_max
                    );
                }
                Err(e) => return Err(e),
            }
        };

        let target = &common.reference;
        let current = &common.others[0];
        let deltas = build_feature_deltas(current, &common.others[1..])?;
        let learned = learn_jacobian(&deltas, &batch.b)?;
        let residual = &target.0 - &current.0;
        let current_cost = residual.norm_squared();
        let k = common.ids.len();
        log::debug!(
            "iteration {iteration}: cost {current_cost:e}, cond(B) {:e}, k {k}",
            learned.condition
        );

        let mut rejections = 0;
        loop {
            let step = lm_step(&learned.j, &residual, lambda)
                .map_err(|e| Error::Degenerate(e.to_string()))?;
            let step_norm = step.norm();
            if step_norm < lm.epsilon {
                records.push(record(
                    iteration,
                    pose,
                    current_cost,
                    step_norm,
                    lambda,
                    &learned,
                    k,
                ));
                return Ok(finish(
                    pose,
                    Termination::Converged,
                    records,
                    reinits,
                    sampler,
                ));
            }

            let candidate = apply_pose_delta(&pose, &step_to_update(&step)).ok();
            let candidate_cost = candidate.as_ref().and_then(|c| {
                let x = renderer.render(c).features_for(&common.ids)?;
                cost(target, &x).ok()
            });
            match (candidate, candidate_cost) {
                (Some(c), Some(cc)) if cc < current_cost => {
                    lambda *= lm.lambda_down;
                    pose = c;
                    records.push(record(iteration, pose, cc, step_norm, lambda, &learned, k));
                    break;
                }
                _ => {
                    lambda *= lm.lambda_up;
                    rejections += 1;
                    if rejections >= MAX_REJECTIONS {
                        records.push(record(
                            iteration,
                            pose,
                            current_cost,
                            step_norm,
                            lambda,
                            &learned,
                            k,
                        ));
                        return Ok(finish(
                            pose,
                            Termination::Stalled,
                            records,
                            reinits,
                            sampler,
                        ));
                    }
                }
            }
        }
    }
    Ok(finish(
        pose,
        Termination::MaxIterations,
        records,
        reinits,
        sampler,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(DVector::from_row_slice(v))
    }

    #[test]
    fn cost_examples() {
        let a = fv(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cost(&a, &a).unwrap(), 0.0);
        assert_eq!(cost(&fv(&[3.0, 4.0]), &fv(&[0.0, 0.0])).unwrap(), 25.0);
        assert_eq!(cost(&fv(&[1.0; 8]), &fv(&[0.0; 8])).unwrap(), 8.0);
        assert!(matches!(
            cost(&fv(&[1.0; 8]), &fv(&[0.0; 6])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn padded_identity() -> DMatrix<f64> {
        let mut j = DMatrix::zeros(8, 6);
        for i in 0..6 {
            j[(i, i)] = 1.0;
        }
        j
    }

    #[test]
    fn zero_residual_gives_zero_step() {
        let step = lm_step(&padded_identity(), &DVector::zeros(8), 1e-3).unwrap();
        assert_eq!(step, Vector6::zeros());
    }

    #[test]
    fn gauss_newton_step_on_padded_identity() {
        let mut r = DVector::zeros(8);
        r[0] = 1.0;
        let step = lm_step(&padded_identity(), &r, 0.0).unwrap();
        assert_eq!(step, Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn heavy_damping_shrinks_step() {
        let j = DMatrix::from_fn(10, 6, |r, c| {
            ((r * 7 + c * 3) % 11) as f64 - 5.0 + 0.1 * c as f64
        });
        let r = DVector::from_fn(10, |i, _| (i as f64).sin());
        let gn = lm_step(&j, &r, 0.0).unwrap();
        let damped = lm_step(&j, &r, 1e6).unwrap();
        assert!(damped.norm() < 1e-4 * gn.norm());
    }

    #[test]
    fn unobservable_direction_is_singular() {
        let mut j = padded_identity();
        j[(5, 5)] = 0.0;
        let r = DVector::from_element(8, 1.0);
        assert_eq!(lm_step(&j, &r, 1.0), Err(Error::SingularNormalEquations));
    }

    #[test]
    fn lm_step_dimension_checks() {
        assert!(matches!(
            lm_step(&padded_identity(), &DVector::zeros(6), 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LmConfig::default().validate().is_ok());
        let bad = [
            LmConfig {
                lambda0: 0.0,
                ..Default::default()
            },
            LmConfig {
                lambda_up: 0.5,
                ..Default::default()
            },
            LmConfig {
                lambda_down: 1.5,
                ..Default::default()
            },
            LmConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            LmConfig {
                max_iterations: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let gn = LmConfig {
            lambda0: 0.0,
            ..Default::default()
        };
        assert!(gn.validate_for_solve().is_ok());
    }
}
