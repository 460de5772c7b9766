use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eit_cli::{CliError, ExperimentConfig, Run};

#[derive(Parser)]
#[command(
    name = "eit-partial",
    version,
    about = "Partial-boundary EIT: simulate, complete, reconstruct, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Noise seed; overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for pattern solves and D-bar pixels.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate measured, background and reference datasets.
    Simulate,
    /// Recover traces and approximate the full-boundary ND matrix.
    Complete,
    /// D-bar reconstructions of the ND matrices.
    Reconstruct,
    /// Error tables against the full-boundary reference.
    Evaluate,
    /// All four stages in sequence.
    Pipeline,
}

fn run(cli: Cli) -> eit_cli::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build_global()
                .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
            w
        }
        None => rayon::current_num_threads(),
    };
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let run = Run::new(cfg, dir, workers);
    match cli.command {
        Command::Simulate => run.simulate().map(drop),
        Command::Complete => run.complete().map(drop),
        Command::Reconstruct => run.reconstruct().map(drop),
        Command::Evaluate => run.evaluate().map(drop),
        Command::Pipeline => run.pipeline(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
