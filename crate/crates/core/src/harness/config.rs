use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{EnvError, EnvSpec};
use crate::policies::PolicyKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("config I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How the exploration scale of SemiGraphTS is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VMode {
    /// Shared `v` tuned on the grid, like every other tunable policy.
    Grid,
    /// Per-user `v_j` from the theoretical formula with the true `‖Δ_j‖`;
    /// `λ` comes from the `lambda` field and is not tuned.
    Oracle,
}

/// Hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            v: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            lambda: vec![0.008, 0.04, 0.2, 1.0, 5.0],
        }
    }
}

impl GridSpec {
    /// Cells in search order: by `v`, then by `λ`, both ascending.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut vs = self.v.clone();
        let mut ls = self.lambda.clone();
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        vs.iter()
            .flat_map(|&v| ls.iter().map(move |&l| (v, l)))
            .collect()
    }
}

/// Full description of an experiment. Every field has a default, so a TOML
/// file only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; replication `r` runs under `seed ^ r`.
    pub seed: u64,
    /// Rounds per grid cell during tuning.
    pub t0: u64,
    /// Evaluation rounds.
    pub horizon: u64,
    pub replications: u64,
    pub policies: Vec<PolicyKind>,
    pub mc_samples: usize,
    /// Confidence level for oracle `v_j` and the coverage check.
    pub delta: f64,
    pub v_mode: VMode,
    /// Graph strength used in oracle mode.
    pub lambda: f64,
    /// Number of evenly spaced summary checkpoints.
    pub checkpoints: u64,
    pub write_traces: bool,
    pub env: EnvSpec,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            t0: 2_000,
            horizon: 20_000,
            replications: 5,
            policies: vec![
                PolicyKind::SemiGraphTs,
                PolicyKind::SemiTsInd,
                PolicyKind::SemiTsSin,
                PolicyKind::LinTsInd,
                PolicyKind::LinTsSin,
                PolicyKind::GraphUcb,
                PolicyKind::Random,
            ],
            mc_samples: 1_000,
            delta: 0.1,
            v_mode: VMode::Grid,
            lambda: 1.0,
            checkpoints: 100,
            write_traces: true,
            env: EnvSpec::default(),
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        self.env.validate()?;
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be below 2^63, got {}", self.seed));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be >= 1".into());
        }
        if self.checkpoints == 0 {
            return bad("checkpoints must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if self.policies.is_empty() {
            return bad("policy list is empty".into());
        }
        let unique: BTreeSet<_> = self.policies.iter().collect();
        if unique.len() != self.policies.len() {
            return bad("policy list has duplicates".into());
        }
        if self.policies.iter().any(|&k| self.is_grid_tuned(k)) {
            if self.grid.v.is_empty() || self.grid.lambda.is_empty() {
                return bad("grid must have at least one v and one lambda".into());
            }
            if self.grid.v.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return bad("grid v values must be finite and >= 0".into());
            }
            if self.grid.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return bad("grid lambda values must be finite and > 0".into());
            }
        }
        Ok(())
    }

    /// Whether `kind` gets its `(v, λ)` from the grid.
    pub fn is_grid_tuned(&self, kind: PolicyKind) -> bool {
        kind.is_tunable() && !(kind == PolicyKind::SemiGraphTs && self.v_mode == VMode::Oracle)
    }

    /// Rounds between summary checkpoints.
    pub fn checkpoint_step(&self) -> u64 {
        (self.horizon / self.checkpoints).max(1)
    }

    /// Checkpoint rounds; the horizon is always the last one.
    pub fn checkpoint_rounds(&self) -> Vec<u64> {
        let step = self.checkpoint_step();
        let mut out: Vec<u64> = (1..=self.horizon / step).map(|k| k * step).collect();
        if out.last() != Some(&self.horizon) {
            out.push(self.horizon);
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text)?;
        let config: Self = if table.contains_key("meta") {
            Manifest::deserialize(table)?.config
        } else {
            Self::deserialize(table)?
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, or the config embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Provenance block of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub replication_seeds: Vec<u64>,
}

/// Resolved config plus provenance. Feeding a manifest back through
/// `--config` replays the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub meta: ManifestMeta,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            meta: ManifestMeta {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                master_seed: config.seed,
                replication_seeds: (0..config.replications)
                    .map(|r| crate::seed::replication_seed(config.seed, r))
                    .collect(),
            },
            config: config.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
