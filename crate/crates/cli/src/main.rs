use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use krlab_cli::config::exec_from_env;
use krlab_cli::{load_config, parse_config, run_command, CliError, Command, Overrides, RunConfig};

/// Kicked rotor simulations: classical sections, quantum evolution and
/// thermal-cloud ensembles.
#[derive(Debug, Parser)]
#[command(name = "krlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// TOML config, or a `run.json` sidecar from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed_cloud: Option<u64>,

    #[arg(long, global = true)]
    seed_noise: Option<u64>,

    /// Momentum grid size, a power of two.
    #[arg(long, global = true)]
    grid: Option<usize>,

    #[arg(long, global = true)]
    record_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Classical stroboscopic section and mean-energy series.
    Poincare,
    /// Single-state quantum evolution.
    Evolve,
    /// Thermal-cloud ensemble average.
    Ensemble,
    /// KR plus MAKR ensembles for each block length in `sweep.M_list`.
    SweepM,
    /// Single-kick populations against squared Bessel functions.
    CalibrateBessel,
    /// Data for one of the preset figures (1 to 5).
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=5))]
        number: u8,
    },
}

/// Used when `calibrate-bessel` or `figure` runs without `--config`.
const FALLBACK_CONFIG: &str = "[params]\nk = 2.0\nhbar_eff = 1.0\nn_kicks = 1\n";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(sidecar) => {
            println!("{}", sidecar.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let command = match cli.command {
        Sub::Poincare => Command::Poincare,
        Sub::Evolve => Command::Evolve,
        Sub::Ensemble => Command::Ensemble,
        Sub::SweepM => Command::SweepM,
        Sub::CalibrateBessel => Command::CalibrateBessel,
        Sub::Figure { number } => Command::Figure(number),
    };
    let mut cfg: RunConfig = match (&cli.config, command) {
        (Some(path), _) => load_config(path)?,
        (None, Command::CalibrateBessel | Command::Figure(_)) => parse_config(FALLBACK_CONFIG)?,
        (None, _) => return Err(CliError::config("--config is required for this command")),
    };
    Overrides {
        out: cli.out.clone(),
        seed_cloud: cli.seed_cloud,
        seed_noise: cli.seed_noise,
        grid: cli.grid,
        record_every: cli.record_every,
    }
    .apply(&mut cfg)?;
    run_command(command, &cfg, &exec_from_env())
}
