use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decontam::commands::{self, Context};
use decontam::config::LoadedConfig;
use decontam::exec::{default_workers, RayonExecutor, WORKERS_ENV};
use decontam::CliError;

#[derive(Parser)]
#[command(name = "decontam", version, about = "Contamination-corrected benchmark estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(short, long, global = true, default_value = "decontam.toml")]
    config: PathBuf,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(short, long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic corpus as JSONL.
    GenData,
    /// Fit predictors and report AUROC / absolute bias on the simulation split.
    Calibrate,
    /// Run bootstrap simulations and summarize RMSE per estimator.
    Simulate,
    /// Winner map over synthetic predictor quality.
    Phase,
    /// RMSE against calibration-set size.
    Efficiency,
    /// Memorization predictors calibrated on one benchmark, applied to others.
    Transfer,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut loaded = LoadedConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
    }
    let output_dir = match cli.out {
        Some(o) => o,
        None => loaded.resolve(&loaded.config.output_dir),
    };
    let exec = RayonExecutor::new(cli.workers.unwrap_or_else(default_workers)).map_err(CliError::Runtime)?;
    let ctx = Context { loaded, output_dir, exec };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Calibrate => commands::calibrate(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Phase => commands::phase(&ctx),
        Command::Efficiency => commands::efficiency(&ctx),
        Command::Transfer => commands::transfer_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
