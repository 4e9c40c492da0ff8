//! `dmimo-sync`: run experiments and validate configuration files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmimo_core::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(name = "dmimo-sync", version, about = "Distributed MU-MIMO synchronization and calibration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write `<experiment>.csv` plus a summary.
    Run {
        /// fig2 | fig5 | fig9 | grid-cdf | custom
        experiment: String,
        /// TOML configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `output_dir` from the config, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a configuration file.
    ValidateConfig { file: PathBuf },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { experiment, config, seed, out, trials, threads } => {
            let kind: ExperimentKind = experiment.parse()?;
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_file(path)?,
                None => ExperimentConfig::for_experiment(kind),
            };
            cfg.experiment = kind;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if trials.is_some() {
                cfg.trials = trials;
            }
            let dir = out.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("results"));
            let table = run_experiment(&cfg, threads)?;
            let (csv, summary) = write_outputs(&table, &dir)?;
            println!("{} rows -> {}", table.len(), csv.display());
            println!("summary -> {}", summary.display());
            Ok(())
        }
        Command::ValidateConfig { file } => {
            let cfg = ExperimentConfig::from_file(&file)?;
            println!("ok: {} ({} trials), config hash {}", cfg.experiment, cfg.trials(), cfg.hash());
            Ok(())
        }
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
