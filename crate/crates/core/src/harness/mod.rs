//! Seeded Monte Carlo orchestration of the experiments.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, tag)` with
//! the trial index as stream number, and trial outputs are collected in
//! index order, so tables do not depend on the worker count.

mod config;
mod custom;
mod fig2;
mod fig5;
mod fig9;
mod grid;
mod table;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    CustomConfig, ExperimentConfig, ExperimentKind, Fig2Config, Fig5Config, Fig9Config, GridCdfConfig, LinkProfile,
    CUSTOM_STAGES,
};
pub use custom::run_custom;
pub use fig2::run_fig2;
pub use fig5::run_fig5;
pub use fig9::run_fig9;
pub use grid::{paired_one_sided_p, run_grid_cdf};
pub use table::{artifact_version, ResultTable, Row};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io(_) | HarnessError::Csv(_) => 1,
        }
    }
}

macro_rules! numerical_from {
    ($($t:ty),*) => {
        $(impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Numerical(e.to_string())
            }
        })*
    };
}

numerical_from!(
    crate::estimator::EstimatorError,
    crate::sync::SyncError,
    crate::calib::CalibError,
    crate::mumimo::MumimoError,
    crate::topology::TopologyError,
    crate::channel::ChannelError,
    crate::ofdm::OfdmError
);

/// Independent stream for trial `trial` of the experiment component `tag`.
pub fn trial_rng(seed: u64, tag: &str, trial: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `f` for every trial in parallel; results come back in trial order.
pub(crate) fn par_trials<T, F>(n: usize, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> Result<T, HarnessError> + Sync + Send,
{
    (0..n).into_par_iter().map(&f).collect()
}

pub(crate) fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Validates `config` and runs its experiment on `threads` workers (all
/// cores when `None`).
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<ResultTable, HarnessError> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(HarnessError::Config("threads must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut table = pool.install(|| match config.experiment {
        ExperimentKind::Fig2 => run_fig2(config),
        ExperimentKind::Fig5 => run_fig5(config),
        ExperimentKind::Fig9 => run_fig9(config),
        ExperimentKind::GridCdf => run_grid_cdf(config),
        ExperimentKind::Custom => run_custom(config),
    })?;
    table.sort();
    Ok(table)
}

/// Writes `<experiment>.csv` and `<experiment>_summary.txt` into `dir`.
pub fn write_outputs(table: &ResultTable, dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", table.experiment));
    let summary_path = dir.join(format!("{}_summary.txt", table.experiment));
    table.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    table.write_summary(std::io::BufWriter::new(std::fs::File::create(&summary_path)?))?;
    Ok((csv_path, summary_path))
}

pub(crate) fn new_table(config: &ExperimentConfig) -> ResultTable {
    ResultTable::new(config.experiment.name(), config.hash(), config.seed)
}
