//! Seeded pose perturbations around a reference pose.
//!
//! Rotation axes are drawn uniformly (by area) from a spherical cap around the
//! camera boresight expressed in the object frame. Rotation angles follow the
//! Haar marginal density `∝ 1 − cos θ` restricted to `[0, θ_max]`, so the
//! perturbations are uniform on the corresponding ball of SO(3). Translations
//! are i.i.d. uniform per axis inside a box.
//!
//! # Random streams
//!
//! Every random draw comes from a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and positioned on stream `stream` via `set_stream`.
//! ChaCha output is platform independent, so a `(seed, stream)` pair always
//! reproduces the same batch. The solver uses stream `iteration · 2¹⁶ +
//! attempt`; the harness derives per-trial seeds from a master seed.

use nalgebra::{DMatrix, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{crp_to_rotation, pose_difference, GibbsVector, Pose, PoseDelta};

/// Total sampling attempts before a batch is declared degenerate.
pub const MAX_BATCH_ATTEMPTS: usize = 5;

/// `rank(B) = 6` requires the smallest singular value to exceed this fraction
/// of the largest.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Stopping width for the inverse-CDF bisection.
const BISECTION_TOLERANCE: f64 = 1e-12;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Perturbations per batch.
    pub n_samples: usize,
    /// Largest rotation angle, radians.
    pub theta_max: f64,
    /// Angular radius of the axis cap around the boresight, radians.
    pub cap_half_angle: f64,
    /// Per-axis translation half widths, scene length units.
    pub translation_half_widths: [f64; 3],
    pub seed: u64,
    /// Factor applied to `theta_max` and the half widths on re-initialization.
    pub conservative_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 24,
            theta_max: 0.01,
            cap_half_angle: std::f64::consts::FRAC_PI_2,
            translation_half_widths: [0.01; 3],
            seed: 0,
            conservative_scale: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_samples < 12 {
            return fail("n_samples >= 12");
        }
        if !(self.theta_max > 0.0 && self.theta_max < std::f64::consts::FRAC_PI_2) {
            return fail("0 < theta_max < pi/2");
        }
        if !(self.cap_half_angle > 0.0 && self.cap_half_angle <= std::f64::consts::PI) {
            return fail("0 < cap_half_angle <= pi");
        }
        if !self
            .translation_half_widths
            .iter()
            .all(|w| *w > 0.0 && w.is_finite())
        {
            return fail("translation_half_widths > 0");
        }
        if !(self.conservative_scale > 0.0 && self.conservative_scale < 1.0) {
            return fail("0 < conservative_scale < 1");
        }
        Ok(())
    }
}

/// Shrinks the sampling radii for a conservative re-initialization.
pub fn shrink(config: &SamplerConfig) -> SamplerConfig {
    let s = config.conservative_scale;
    SamplerConfig {
        theta_max: config.theta_max * s,
        translation_half_widths: config.translation_half_widths.map(|w| w * s),
        ..*config
    }
}

/// Unit vector uniform by area over the cap of angular radius `cap_half_angle`
/// around `reference_axis`.
pub fn sample_axis_in_cap<R: Rng + ?Sized>(
    reference_axis: &Unit<Vector3<f64>>,
    cap_half_angle: f64,
    rng: &mut R,
) -> Unit<Vector3<f64>> {
    // Area on the sphere is uniform in cos α.
    let cos_cap = cap_half_angle.min(std::f64::consts::PI).cos();
    let cos_a = 1.0 - rng.random::<f64>() * (1.0 - cos_cap);
    let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;

    let z = reference_axis.into_inner();
    let helper = if z.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = z.cross(&helper).normalize();
    let e2 = z.cross(&e1);
    Unit::new_normalize(e1 * (sin_a * phi.cos()) + e2 * (sin_a * phi.sin()) + z * cos_a)
}

/// `θ − sin θ` without cancellation for small θ.
fn theta_minus_sin(theta: f64) -> f64 {
    if theta.abs() < 0.1 {
        let t2 = theta * theta;
        // θ³/3! − θ⁵/5! + θ⁷/7! − θ⁹/9! + θ¹¹/11!
        theta * t2 / 6.0
            * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0))))
    } else {
        theta - theta.sin()
    }
}

/// Draws θ ∈ `[0, theta_max]` with density `∝ 1 − cos θ` by bisecting the CDF
/// `(θ − sin θ) / (θ_max − sin θ_max)`.
pub fn sample_rotation_angle<R: Rng + ?Sized>(theta_max: f64, rng: &mut R) -> f64 {
    let target = rng.random::<f64>() * theta_minus_sin(theta_max);
    let (mut lo, mut hi) = (0.0, theta_max);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if theta_minus_sin(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random rotation with Haar-restricted angle in `[0, theta_max]` about an
/// axis from the cap, as a Gibbs vector. `theta_max` must lie in `(0, π)`.
pub fn sample_rotation<R: Rng + ?Sized>(
    theta_max: f64,
    reference_axis: &Unit<Vector3<f64>>,
    cap_half_angle: f64,
    rng: &mut R,
) -> GibbsVector {
    let axis = sample_axis_in_cap(reference_axis, cap_half_angle, rng);
    let angle = sample_rotation_angle(theta_max, rng);
    GibbsVector::from_axis_angle(&axis, angle)
}

pub fn sample_translation<R: Rng + ?Sized>(half_widths: &[f64; 3], rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|i, _| (2.0 * rng.random::<f64>() - 1.0) * half_widths[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    /// `pose_difference(reference, poses[i])` for every sample.
    pub deltas: Vec<PoseDelta>,
    pub poses: Vec<Pose>,
    /// 6 × N matrix whose columns are `deltas`.
    pub b: DMatrix<f64>,
    /// Largest and smallest singular values of `b`.
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl PerturbationBatch {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// Ratio of extreme singular values of `b`.
    pub fn condition_number(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }

    pub fn has_full_rank(&self) -> bool {
        self.sigma_min > RANK_TOLERANCE * self.sigma_max
    }
}

/// Extreme singular values of a matrix.
pub fn singular_value_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}

/// Camera boresight (+z) expressed in the object frame of `pose`.
pub fn boresight_axis(pose: &Pose) -> Unit<Vector3<f64>> {
    Unit::new_normalize(pose.rotation().matrix().transpose() * Vector3::z())
}

/// Draws `n_samples` perturbed poses around `reference`.
///
/// Sample `i` has rotation `R_ref · ΔR_i` and translation `t_ref + Δt_i`; the
/// stored delta is `pose_difference(reference, pose_i)`. If the resulting
/// `B` is not rank 6 (or a delta is zero) the whole batch is redrawn from the
/// same stream, up to [`MAX_BATCH_ATTEMPTS`] times.
pub fn sample_batch(
    reference: &Pose,
    config: &SamplerConfig,
    stream: u64,
) -> Result<PerturbationBatch> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed, stream);
    let axis = boresight_axis(reference);
    let r_ref = reference.rotation();
    let n = config.n_samples;

    for _ in 0..MAX_BATCH_ATTEMPTS {
        let mut poses = Vec::with_capacity(n);
        let mut deltas = Vec::with_capacity(n);
        for _ in 0..n {
            let dq = sample_rotation(config.theta_max, &axis, config.cap_half_angle, &mut rng);
            let dt = sample_translation(&config.translation_half_widths, &mut rng);
            let orientation = r_ref.compose(&crp_to_rotation(&dq)).to_crp()?;
            let pose = Pose::new(orientation, reference.translation + dt);
            deltas.push(pose_difference(reference, &pose)?);
            poses.push(pose);
        }
        let b = DMatrix::from_fn(6, n, |r, c| deltas[c][r]);
        let (sigma_max, sigma_min) = singular_value_range(&b);
        let batch = PerturbationBatch {
            deltas,
            poses,
            b,
            sigma_max,
            sigma_min,
        };
        if batch.has_full_rank() && batch.deltas.iter().all(|d| d.norm() > 0.0) {
            return Ok(batch);
        }
        log::debug!(
            "rank-deficient perturbation batch (cond {:e}), redrawing",
            batch.condition_number()
        );
    }
    Err(Error::DegenerateBatch {
        attempts: MAX_BATCH_ATTEMPTS,
    })
}
