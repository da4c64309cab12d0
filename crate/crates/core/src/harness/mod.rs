//! Experiment orchestration: the per-round loop, grid search, replications.

mod bench;
mod config;
mod run;

use thiserror::Error;

use crate::environment::EnvError;
use crate::policies::PolicyError;

pub use bench::{
    diagnostics, evaluation_seed, grid_search, grid_search_by, replicate, tuning_seed, BenchResult,
    PolicyRun, ReplicationResult, RunDiagnostics, Tuned,
};
pub use config::{ConfigError, ExperimentConfig, GridSpec, Manifest, ManifestMeta, VMode};
pub use run::{
    centered_error_ratio, coverage_check, psi_diagnostic, run_simulation, CoverageReport, RoundRecord,
    RunStreams, Trace,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("policy failed at round {round}: {source}")]
    Policy { round: u64, source: PolicyError },
    #[error(transparent)]
    Build(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid has no cells")]
    EmptyGrid,
}

/// Runs `f` on a dedicated pool of `jobs` threads, or on the global pool
/// when `jobs` is `None`.
pub fn with_jobs<T, F>(jobs: Option<usize>, f: F) -> Result<T, HarnessError>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match jobs {
        None => Ok(f()),
        Some(0) => Err(ConfigError::Invalid("jobs must be >= 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
