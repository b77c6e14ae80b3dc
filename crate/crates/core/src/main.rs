use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drpose::harness::{self, HarnessError, ModelSpec};

/// Model-based pose refinement from rendered keypoints.
#[derive(Debug, Parser)]
#[command(name = "drpose", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario and print a summary.
    Run {
        scenario: PathBuf,
        /// Directory for iterations.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a scenario repeatedly with seeds derived from a master seed.
    Batch {
        scenario: PathBuf,
        #[arg(long)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        /// Directory for per-trial iteration logs and trials.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without solving it.
    Validate { scenario: PathBuf },
    /// Write a synthetic model file: cube8, asymmetric12 or random:<n>:<seed>.
    GenModel {
        spec: ModelSpec,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run { scenario, out } => {
            let s = harness::load_scenario(&scenario)?;
            let summary = harness::run(&s, out.as_deref())?;
            println!("{}", summary.summary_line());
            println!("{}", summary.report());
            Ok(harness::EXIT_OK)
        }
        Command::Batch {
            scenario,
            seeds,
            master_seed,
            out,
        } => {
            let s = harness::load_scenario(&scenario)?;
            let summary = harness::batch(&s, seeds, master_seed, out.as_deref())?;
            println!("{}", summary.summary_line());
            println!("{}", summary.report());
            Ok(summary.exit_code())
        }
        Command::Validate { scenario } => {
            let s = harness::load_scenario(&scenario)?;
            println!(
                "ok: {} ({} keypoints, {}x{} camera)",
                s.name,
                s.model.len(),
                s.camera.width,
                s.camera.height
            );
            Ok(harness::EXIT_OK)
        }
        Command::GenModel { spec, out } => {
            let model = harness::generate_model(&spec)
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            harness::save_model(&model, &out)?;
            println!("wrote {} keypoints to {}", model.len(), out.display());
            Ok(harness::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
