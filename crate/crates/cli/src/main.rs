mod commands;
mod config;
mod error;
mod selftest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "koopeig",
    version,
    about = "Koopman eigenfunction predictors and MPC"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `outputs.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Data seed (overrides `data.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the training datasets and write a manifest.
    Generate,
    /// Learn a predictor from generated data.
    Learn {
        /// Directory holding `data/` (defaults to the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Roll a learned predictor forward against the true system.
    Predict {
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Prediction-error table over eigenfunction counts.
    Table,
    /// Closed-loop MPC with a learned predictor.
    Mpc {
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Fast internal consistency checks.
    Selftest,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    if let Command::Selftest = cli.command {
        return if selftest::run() {
            Ok(())
        } else {
            Err(koopeig::Error::InvalidArgument("self-test failed".into()).into())
        };
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let plan = config::load(path, cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::Generate => commands::generate(&plan),
        Command::Learn { data } => commands::learn_cmd(&plan, data.as_deref()),
        Command::Predict { predictor } => commands::predict(&plan, predictor.as_deref()),
        Command::Table => commands::table(&plan),
        Command::Mpc { predictor } => commands::mpc(&plan, predictor.as_deref()),
        Command::Selftest => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
