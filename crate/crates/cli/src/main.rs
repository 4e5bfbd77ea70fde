use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cogs_cli::commands;
use cogs_cli::spec::ExperimentSpec;
use cogs_cli::CliError;

#[derive(Parser)]
#[command(name = "cogs", version, about = "Offline game-solving experiments")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate an offline trajectory dataset.
    GenerateDataset {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset file (newline-delimited JSON).
        #[arg(long)]
        out: PathBuf,
        /// Shrink training and simulation budgets by fixed factors.
        #[arg(long)]
        desk_scale: bool,
    },
    /// Run the configured algorithm and write a run directory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file (required for offline algorithms).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        desk_scale: bool,
    },
    /// Evaluate a finished run against the true game.
    Evaluate {
        /// Run directory produced by `solve`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        desk_scale: bool,
    },
    /// Aggregate evaluated runs into tables and scatter data.
    Report {
        /// Output directory for the aggregate CSV files.
        #[arg(long)]
        out: PathBuf,
        /// Evaluated run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load_spec(path: &PathBuf, desk_scale: bool) -> Result<ExperimentSpec, CliError> {
    let mut spec = ExperimentSpec::load(path)?;
    if desk_scale {
        spec.apply_desk_scale();
    }
    Ok(spec)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Commands::GenerateDataset { config, seed, out, desk_scale } => {
            let spec = load_spec(&config, desk_scale)?;
            commands::cmd_generate_dataset(&spec, seed, &out)
        }
        Commands::Solve { config, dataset, out, seed, desk_scale } => {
            let spec = load_spec(&config, desk_scale)?;
            commands::cmd_solve(&spec, dataset.as_deref(), &out, seed)
        }
        Commands::Evaluate { run, config, seed, desk_scale } => {
            let spec = load_spec(&config, desk_scale)?;
            commands::cmd_evaluate(&run, &spec, seed)
        }
        Commands::Report { out, runs } => commands::cmd_report(&runs, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
