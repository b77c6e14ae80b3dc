//! Scenario files, single runs and seeded batches.
//!
//! # Scenario file
//!
//! A scenario is one TOML file. Unknown keys are rejected. Lengths are in
//! scene units, angles in radians unless the key says `_deg`, pixel values in
//! pixels. Relative paths resolve against the scenario file's directory.
//!
//! ```toml
//! [model]                     # exactly one of `generator` or `file`
//! generator = "random"        # "cube8" | "asymmetric12" | "random"
//! n = 6                       # random only, n >= 4
//! seed = 3                    # random only
//! # file = "target.toml"
//!
//! [camera]                    # optional; either `file` or inline fields
//! fx = 500.0                  # defaults: 640x480, fx = fy = 500,
//! fy = 500.0                  # gamma = 0, principal point at the center
//! x0 = 320.0
//! y0 = 240.0
//! width = 640
//! height = 480
//!
//! [ground_truth]              # required
//! q = [0.1, -0.2, 0.05]       # Gibbs vector
//! t = [0.2, -0.1, 10.0]
//!
//! [initial_guess]             # required; explicit `q`/`t`, or an offset:
//! rotation_deg = 5.0          # about a uniformly random axis
//! translation_fraction = 0.02 # of the ground-truth range ‖t‖
//! seed = 1
//!
//! [corruption]                # optional, all default to 0
//! noise_sigma = 0.5
//! outlier_fraction = 0.0
//! dropout_fraction = 0.0
//! seed = 7
//!
//! [sampler]                   # optional, see `SamplerConfig`
//! n_samples = 24
//! theta_max = 0.01
//! cap_half_angle = 1.5707963267948966
//! translation_half_widths = [0.01, 0.01, 0.01]
//! seed = 0
//! conservative_scale = 0.5
//!
//! [lm]                        # optional, see `LmConfig`
//! lambda0 = 1e-3
//! lambda_up = 10.0
//! lambda_down = 0.1
//! epsilon = 1e-6
//! max_iterations = 50
//! max_reinits = 5
//! ```

pub mod models;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Unit, Vector3};
use rand::Rng;
use serde::Deserialize;

use crate::error::Error;
use crate::geometry::{GibbsVector, Pose};
use crate::metrics::{pose_error, PoseError};
use crate::parallel;
use crate::rendering::{
    corrupt, render, CameraIntrinsics, CorruptionParams, PinholeRenderer, TargetModel,
};
use crate::sampling::{sample_axis_in_cap, seeded_rng, SamplerConfig};
use crate::solver::{estimate_pose, IterationRecord, LmConfig, Termination};

pub use models::{generate_model, load_camera, load_model, save_model, ModelSpec};

/// Stream reserved for initial-guess offsets.
const INITIAL_GUESS_STREAM: u64 = 0x1_0000_0000;
/// Stream from which batch mode draws per-trial seeds.
const BATCH_STREAM: u64 = 0x2_0000_0000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("scenario {scenario}: {source}")]
    Solve { scenario: String, source: Error },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } | HarnessError::Parse { .. } | HarnessError::Validation(_) => {
                EXIT_CONFIG
            }
            HarnessError::Solve {
                source: Error::InitialGuessInfeasible { .. },
                ..
            } => EXIT_INFEASIBLE,
            HarnessError::Solve {
                source: Error::InvalidConfig(_),
                ..
            } => EXIT_CONFIG,
            HarnessError::Solve { .. } => EXIT_DEGENERATE,
            HarnessError::Output(_) => EXIT_FAILURE,
        }
    }
}

fn read_config(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Generator(ModelSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Explicit(Pose),
    /// Rotation by `rotation_deg` about a random axis and a translation offset
    /// of `translation_fraction · ‖t_truth‖` in a random direction.
    Offset {
        rotation_deg: f64,
        translation_fraction: f64,
        seed: u64,
    },
}

impl InitialGuess {
    pub fn resolve(&self, truth: &Pose) -> Result<Pose, Error> {
        match *self {
            InitialGuess::Explicit(p) => Ok(p),
            InitialGuess::Offset {
                rotation_deg,
                translation_fraction,
                seed,
            } => {
                let mut rng = seeded_rng(seed, INITIAL_GUESS_STREAM);
                let z = Unit::new_unchecked(Vector3::z());
                let axis = sample_axis_in_cap(&z, std::f64::consts::PI, &mut rng);
                let offset = GibbsVector::from_axis_angle(&axis, rotation_deg.to_radians());
                let orientation = truth.rotation().compose(&offset.to_rotation()).to_crp()?;
                let direction = sample_axis_in_cap(&z, std::f64::consts::PI, &mut rng);
                let shift =
                    direction.into_inner() * (translation_fraction * truth.translation.norm());
                Ok(Pose::new(orientation, truth.translation + shift))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model_source: ModelSource,
    pub model: TargetModel,
    pub camera: CameraIntrinsics,
    pub ground_truth: Pose,
    pub initial_guess: InitialGuess,
    pub corruption: CorruptionParams,
    pub sampler: SamplerConfig,
    pub lm: LmConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    model: RawModel,
    #[serde(default)]
    camera: RawCamera,
    ground_truth: RawPose,
    initial_guess: RawInitialGuess,
    #[serde(default)]
    corruption: CorruptionParams,
    #[serde(default)]
    sampler: SamplerConfig,
    #[serde(default)]
    lm: LmConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    generator: Option<String>,
    n: Option<usize>,
    seed: Option<u64>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    file: Option<PathBuf>,
    fx: Option<f64>,
    fy: Option<f64>,
    gamma: Option<f64>,
    x0: Option<f64>,
    y0: Option<f64>,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    q: [f64; 3],
    t: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitialGuess {
    q: Option<[f64; 3]>,
    t: Option<[f64; 3]>,
    rotation_deg: Option<f64>,
    translation_fraction: Option<f64>,
    seed: Option<u64>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

fn validate_pose(what: &str, q: [f64; 3], t: [f64; 3]) -> Result<Pose, HarnessError> {
    if !q.iter().chain(&t).all(|v| v.is_finite()) {
        return Err(invalid(format!("{what}: pose components must be finite")));
    }
    let pose = Pose::new(GibbsVector(Vector3::from(q)), Vector3::from(t));
    // Rejects Gibbs vectors too close to the half-turn singularity.
    crate::geometry::apply_pose_delta(&pose, &nalgebra::Vector6::zeros())
        .map_err(|e| invalid(format!("{what}: {e}")))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = read_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario(&text, base, &name).map_err(|e| match e {
        HarnessError::Parse { message, .. } => HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses and validates scenario text; relative paths resolve against `base`.
pub fn parse_scenario(text: &str, base: &Path, name: &str) -> Result<Scenario, HarnessError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| HarnessError::Parse {
        path: PathBuf::from(name),
        message: e.to_string(),
    })?;

    let model_source = match (&raw.model.generator, &raw.model.file) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "model: give either `generator` or `file`, not both",
            ))
        }
        (None, None) => return Err(invalid("model: one of `generator` or `file` is required")),
        (None, Some(file)) => {
            if raw.model.n.is_some() || raw.model.seed.is_some() {
                return Err(invalid(
                    "model: `n` and `seed` only apply to generator = \"random\"",
                ));
            }
            ModelSource::File(base.join(file))
        }
        (Some(g), None) => {
            let spec = match (g.as_str(), raw.model.n, raw.model.seed) {
                ("cube8", None, None) => ModelSpec::Cube8,
                ("asymmetric12", None, None) => ModelSpec::Asymmetric12,
                ("random", Some(n), Some(seed)) => {
                    if n < 4 {
                        return Err(invalid("model: random generator requires n >= 4"));
                    }
                    ModelSpec::Random { n, seed }
                }
                ("random", _, _) => {
                    return Err(invalid("model: random generator requires `n` and `seed`"))
                }
                ("cube8" | "asymmetric12", _, _) => {
                    return Err(invalid(format!("model: `{g}` takes no `n` or `seed`")))
                }
                _ => return Err(invalid(format!("model: unknown generator {g:?}"))),
            };
            ModelSource::Generator(spec)
        }
    };
    let model = match &model_source {
        ModelSource::Generator(spec) => generate_model(spec).map_err(|e| invalid(e.to_string()))?,
        ModelSource::File(path) => load_model(path)?,
    };

    let c = raw.camera;
    let camera = match c.file {
        Some(file) => {
            if c.fx.is_some()
                || c.fy.is_some()
                || c.gamma.is_some()
                || c.x0.is_some()
                || c.y0.is_some()
                || c.width.is_some()
                || c.height.is_some()
            {
                return Err(invalid(
                    "camera: give either `file` or inline parameters, not both",
                ));
            }
            load_camera(&base.join(file))?
        }
        None => {
            let d = CameraIntrinsics::default();
            let width = c.width.unwrap_or(d.width);
            let height = c.height.unwrap_or(d.height);
            CameraIntrinsics {
                fx: c.fx.unwrap_or(d.fx),
                fy: c.fy.unwrap_or(d.fy),
                gamma: c.gamma.unwrap_or(d.gamma),
                x0: c.x0.unwrap_or(width as f64 / 2.0),
                y0: c.y0.unwrap_or(height as f64 / 2.0),
                width,
                height,
            }
        }
    };
    camera
        .validate()
        .map_err(|e| invalid(format!("camera: {e}")))?;

    let ground_truth = validate_pose("ground_truth", raw.ground_truth.q, raw.ground_truth.t)?;

    let g = raw.initial_guess;
    let initial_guess = match (g.q, g.t, g.rotation_deg, g.translation_fraction, g.seed) {
        (Some(q), Some(t), None, None, None) => InitialGuess::Explicit(validate_pose("initial_guess", q, t)?),
        (None, None, Some(rotation_deg), Some(translation_fraction), seed) => {
            if !(0.0..180.0).contains(&rotation_deg) {
                return Err(invalid("initial_guess: 0 <= rotation_deg < 180"));
            }
            if !(translation_fraction >= 0.0 && translation_fraction.is_finite()) {
                return Err(invalid("initial_guess: translation_fraction >= 0"));
            }
            InitialGuess::Offset {
                rotation_deg,
                translation_fraction,
                seed: seed.unwrap_or(0),
            }
        }
        _ => {
            return Err(invalid(
                "initial_guess: give either `q` and `t`, or `rotation_deg` and `translation_fraction` (with optional `seed`)",
            ))
        }
    };

    raw.corruption
        .validate()
        .map_err(|e| invalid(format!("corruption: {e}")))?;
    raw.sampler
        .validate()
        .map_err(|e| invalid(format!("sampler: {e}")))?;
    raw.lm.validate().map_err(|e| invalid(format!("lm: {e}")))?;

    Ok(Scenario {
        name: name.to_string(),
        model_source,
        model,
        camera,
        ground_truth,
        initial_guess,
        corruption: raw.corruption,
        sampler: raw.sampler,
        lm: raw.lm,
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: String,
    pub error: PoseError,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    pub initial_guess: Pose,
    pub final_pose: Pose,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub reinitializations: usize,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn accepted_steps(&self) -> &[IterationRecord] {
        crate::solver::accepted_steps(&self.records, self.termination)
    }

    /// Single machine-parsable `key=value` line.
    pub fn summary_line(&self) -> String {
        format!(
            "summary scenario={} status=ok converged={} termination={} iterations={} rot_err_deg={} trans_err={} initial_cost={} final_cost={} reinits={} wall_ms={:.3}",
            self.scenario,
            self.converged,
            self.termination.as_str(),
            self.iterations,
            output::format_real(self.error.rotation_error),
            output::format_real(self.error.translation_error),
            output::format_real(self.initial_cost),
            output::format_real(self.final_cost),
            self.reinitializations,
            self.wall_time.as_secs_f64() * 1e3,
        )
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let q = &self.final_pose.orientation.0;
        let t = &self.final_pose.translation;
        let _ = writeln!(s, "scenario        {}", self.scenario);
        let _ = writeln!(
            s,
            "termination     {} after {} iterations",
            self.termination.as_str(),
            self.iterations
        );
        let _ = writeln!(s, "rotation error  {:.6} deg", self.error.rotation_error);
        let _ = writeln!(s, "translation err {:.6e}", self.error.translation_error);
        let _ = writeln!(
            s,
            "cost            {:.6e} -> {:.6e} px^2",
            self.initial_cost, self.final_cost
        );
        let _ = writeln!(s, "re-inits        {}", self.reinitializations);
        let _ = writeln!(s, "final q         [{:.9}, {:.9}, {:.9}]", q.x, q.y, q.z);
        let _ = writeln!(s, "final t         [{:.9}, {:.9}, {:.9}]", t.x, t.y, t.z);
        let _ = write!(
            s,
            "wall time       {:.1} ms",
            self.wall_time.as_secs_f64() * 1e3
        );
        s
    }
}

/// Renders the reference at the ground truth, corrupts it, and solves from
/// the scenario's initial guess. Writes `iterations.csv` into `out_dir` when
/// given.
pub fn run(scenario: &Scenario, out_dir: Option<&Path>) -> Result<RunSummary, HarnessError> {
    let summary = solve_scenario(scenario)?;
    if let Some(dir) = out_dir {
        write_csv(&dir.join("iterations.csv"), &summary.records)?;
    }
    Ok(summary)
}

fn solve_scenario(scenario: &Scenario) -> Result<RunSummary, HarnessError> {
    let solve_err = |source| HarnessError::Solve {
        scenario: scenario.name.clone(),
        source,
    };
    let start = Instant::now();
    let truth = scenario.ground_truth;
    let clean = render(&scenario.model, &truth, &scenario.camera);
    let reference = corrupt(&clean, &scenario.corruption, &scenario.camera);
    let initial_guess = scenario.initial_guess.resolve(&truth).map_err(solve_err)?;
    let renderer = PinholeRenderer::new(scenario.model.clone(), scenario.camera);
    let result = estimate_pose(
        &renderer,
        &reference,
        &initial_guess,
        &scenario.sampler,
        &scenario.lm,
        Some(&truth),
    )
    .map_err(solve_err)?;
    Ok(RunSummary {
        scenario: scenario.name.clone(),
        error: pose_error(&truth, &result.pose),
        iterations: result.records.len(),
        converged: result.converged,
        termination: result.termination,
        initial_guess,
        final_pose: result.pose,
        initial_cost: result.initial_cost,
        final_cost: result.final_cost(),
        reinitializations: result.reinitializations,
        records: result.records,
        wall_time: start.elapsed(),
    })
}

fn write_csv(path: &Path, records: &[IterationRecord]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Output(format!("{}: {e}", dir.display())))?;
    }
    let file = fs::File::create(path)
        .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    output::write_iterations(std::io::BufWriter::new(file), records)
        .map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}

/// Seeds used by one batch trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub initial_guess: u64,
    pub corruption: u64,
    pub sampler: u64,
}

/// Per-trial seeds drawn sequentially from `master_seed`.
pub fn trial_seeds(master_seed: u64, trials: usize) -> Vec<TrialSeeds> {
    let mut rng = seeded_rng(master_seed, BATCH_STREAM);
    (0..trials)
        .map(|_| TrialSeeds {
            initial_guess: rng.random(),
            corruption: rng.random(),
            sampler: rng.random(),
        })
        .collect()
}

/// Copy of `scenario` with the trial's seeds substituted. An explicit initial
/// guess is kept as is.
pub fn trial_scenario(scenario: &Scenario, index: usize, seeds: &TrialSeeds) -> Scenario {
    let mut s = scenario.clone();
    s.name = format!("{}#{index:03}", scenario.name);
    if let InitialGuess::Offset { seed, .. } = &mut s.initial_guess {
        *seed = seeds.initial_guess;
    }
    s.corruption.seed = seeds.corruption;
    s.sampler.seed = seeds.sampler;
    s
}

#[derive(Debug)]
pub struct TrialOutcome {
    pub index: usize,
    pub seeds: TrialSeeds,
    pub result: Result<RunSummary, HarnessError>,
}

#[derive(Debug)]
pub struct BatchSummary {
    pub scenario: String,
    pub master_seed: u64,
    pub trials: Vec<TrialOutcome>,
    pub wall_time: Duration,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl BatchSummary {
    fn successes(&self) -> impl Iterator<Item = &RunSummary> {
        self.trials.iter().filter_map(|t| t.result.as_ref().ok())
    }

    pub fn converged_count(&self) -> usize {
        self.successes().filter(|s| s.converged).count()
    }

    pub fn failed_count(&self) -> usize {
        self.trials.iter().filter(|t| t.result.is_err()).count()
    }

    pub fn median_rotation_error(&self) -> f64 {
        median(self.successes().map(|s| s.error.rotation_error).collect())
    }

    pub fn median_translation_error(&self) -> f64 {
        median(
            self.successes()
                .map(|s| s.error.translation_error)
                .collect(),
        )
    }

    pub fn worst_rotation_error(&self) -> f64 {
        self.successes()
            .map(|s| s.error.rotation_error)
            .fold(f64::NAN, f64::max)
    }

    pub fn worst_translation_error(&self) -> f64 {
        self.successes()
            .map(|s| s.error.translation_error)
            .fold(f64::NAN, f64::max)
    }

    /// Exit code of the first failed trial, or 0.
    pub fn exit_code(&self) -> i32 {
        self.trials
            .iter()
            .find_map(|t| t.result.as_ref().err().map(HarnessError::exit_code))
            .unwrap_or(EXIT_OK)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "batch scenario={} master_seed={} trials={} converged={} failed={} median_rot_err_deg={} median_trans_err={} worst_rot_err_deg={} worst_trans_err={} wall_ms={:.3}",
            self.scenario,
            self.master_seed,
            self.trials.len(),
            self.converged_count(),
            self.failed_count(),
            output::format_real(self.median_rotation_error()),
            output::format_real(self.median_translation_error()),
            output::format_real(self.worst_rotation_error()),
            output::format_real(self.worst_translation_error()),
            self.wall_time.as_secs_f64() * 1e3,
        )
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario             {}", self.scenario);
        let _ = writeln!(
            s,
            "trials               {} ({} converged, {} failed)",
            self.trials.len(),
            self.converged_count(),
            self.failed_count()
        );
        let _ = writeln!(
            s,
            "rotation error deg   median {:.6}  worst {:.6}",
            self.median_rotation_error(),
            self.worst_rotation_error()
        );
        let _ = writeln!(
            s,
            "translation error    median {:.6e}  worst {:.6e}",
            self.median_translation_error(),
            self.worst_translation_error()
        );
        for t in &self.trials {
            if let Err(e) = &t.result {
                let _ = writeln!(s, "trial {:03} failed: {e}", t.index);
            }
        }
        let _ = write!(
            s,
            "wall time            {:.1} ms",
            self.wall_time.as_secs_f64() * 1e3
        );
        s
    }

    /// One row per trial; contains no timing, so identical inputs give
    /// identical bytes.
    pub fn write_trials_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let out_err = |e: csv::Error| HarnessError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(out_err)?;
        w.write_record([
            "trial",
            "status",
            "converged",
            "termination",
            "iterations",
            "rot_err_deg",
            "trans_err",
            "initial_cost",
            "final_cost",
            "reinits",
            "guess_seed",
            "corruption_seed",
            "sampler_seed",
        ])
        .map_err(out_err)?;
        for t in &self.trials {
            let seeds = [
                t.seeds.initial_guess.to_string(),
                t.seeds.corruption.to_string(),
                t.seeds.sampler.to_string(),
            ];
            let row: Vec<String> = match &t.result {
                Ok(s) => vec![
                    t.index.to_string(),
                    "ok".into(),
                    s.converged.to_string(),
                    s.termination.as_str().into(),
                    s.iterations.to_string(),
                    output::format_real(s.error.rotation_error),
                    output::format_real(s.error.translation_error),
                    output::format_real(s.initial_cost),
                    output::format_real(s.final_cost),
                    s.reinitializations.to_string(),
                ],
                Err(e) => {
                    let status = match e.exit_code() {
                        EXIT_INFEASIBLE => "infeasible",
                        EXIT_DEGENERATE => "degenerate",
                        _ => "error",
                    };
                    let mut r = vec![t.index.to_string(), status.into(), "false".into()];
                    r.extend(std::iter::repeat_n(String::new(), 7));
                    r
                }
            };
            w.write_record(row.into_iter().chain(seeds))
                .map_err(out_err)?;
        }
        w.flush().map_err(|e| HarnessError::Output(e.to_string()))
    }
}

/// Runs `trials` copies of the scenario with seeds derived from
/// `master_seed`, concurrently when the `parallel` feature is on. With an
/// output directory, writes `iterations_NNN.csv` per successful trial and
/// `trials.csv`.
pub fn batch(
    scenario: &Scenario,
    trials: usize,
    master_seed: u64,
    out_dir: Option<&Path>,
) -> Result<BatchSummary, HarnessError> {
    let start = Instant::now();
    let seeds = trial_seeds(master_seed, trials);
    let indexed: Vec<(usize, TrialSeeds)> = seeds.into_iter().enumerate().collect();
    let outcomes = parallel::map(&indexed, |(i, s)| TrialOutcome {
        index: *i,
        seeds: *s,
        result: solve_scenario(&trial_scenario(scenario, *i, s)),
    });
    let summary = BatchSummary {
        scenario: scenario.name.clone(),
        master_seed,
        trials: outcomes,
        wall_time: start.elapsed(),
    };
    if let Some(dir) = out_dir {
        for t in &summary.trials {
            if let Ok(s) = &t.result {
                write_csv(
                    &dir.join(format!("iterations_{:03}.csv", t.index)),
                    &s.records,
                )?;
            }
        }
        fs::create_dir_all(dir).map_err(|e| HarnessError::Output(e.to_string()))?;
        summary.write_trials_csv(&dir.join("trials.csv"))?;
    }
    Ok(summary)
}
