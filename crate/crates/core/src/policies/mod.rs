//! Bandit policies behind one interface.
//!
//! [`SemiGraphTs`] is the graph-regularized semi-parametric Thompson sampler
//! with Monte Carlo arm probabilities. The comparison policies are the
//! semi-parametric sampler without the graph ([`SemiTs`]), linear Thompson
//! sampling ([`LinTs`]), Laplacian-regularized UCB ([`GraphUcb`]), uniform
//! random play, and an oracle that knows the true parameters.

mod baselines;
mod semigraph;
mod state;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{ContextSet, Environment};
use crate::linalg::{LinalgError, SpdFactor};
use crate::seed::SimRng;

pub use baselines::{random_round, GraphUcb, LinTs, OraclePolicy, RandomPolicy, SemiTs, Sharing};
pub use semigraph::{
    confidence_radius, estimate_arm_probs_mc, exploration_gram, graph_adjusted_estimate,
    mc_thompson_round, ts_sample, v_parameter, SampledParam, SemiGraphTs,
};
pub use state::{ArmProbs, UserState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("user {user} out of range (n = {n})")]
    UserOutOfRange { user: usize, n: usize },
    #[error("context dimension {got} does not match policy dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid policy configuration: {0}")]
    Config(String),
}

/// Policy families understood by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[serde(rename = "semigraphts")]
    SemiGraphTs,
    #[serde(rename = "semits-ind")]
    SemiTsInd,
    #[serde(rename = "semits-sin")]
    SemiTsSin,
    #[serde(rename = "lints-ind")]
    LinTsInd,
    #[serde(rename = "lints-sin")]
    LinTsSin,
    #[serde(rename = "graphucb")]
    GraphUcb,
    Random,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::SemiGraphTs,
        PolicyKind::SemiTsInd,
        PolicyKind::SemiTsSin,
        PolicyKind::LinTsInd,
        PolicyKind::LinTsSin,
        PolicyKind::GraphUcb,
        PolicyKind::Random,
        PolicyKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::SemiGraphTs => "semigraphts",
            PolicyKind::SemiTsInd => "semits-ind",
            PolicyKind::SemiTsSin => "semits-sin",
            PolicyKind::LinTsInd => "lints-ind",
            PolicyKind::LinTsSin => "lints-sin",
            PolicyKind::GraphUcb => "graphucb",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
        }
    }

    /// Whether `(v, λ)` is tuned by grid search.
    pub fn is_tunable(self) -> bool {
        !matches!(self, PolicyKind::Random | PolicyKind::Oracle)
    }

    /// Whether the policy reads the Monte Carlo sample budget.
    pub fn uses_monte_carlo(self) -> bool {
        matches!(
            self,
            PolicyKind::SemiGraphTs | PolicyKind::SemiTsInd | PolicyKind::SemiTsSin
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PolicyError::Config(format!("unknown policy `{s}`")))
    }
}

/// Exploration scale `v`: shared across users, or one value per user.
#[derive(Debug, Clone, PartialEq)]
pub enum Exploration {
    Shared(f64),
    PerUser(Vec<f64>),
}

impl Exploration {
    pub fn for_user(&self, user: usize) -> f64 {
        match self {
            Exploration::Shared(v) => *v,
            Exploration::PerUser(vs) => vs[user],
        }
    }
}

/// Hyperparameters of a policy instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub exploration: Exploration,
    /// Graph strength; also the ridge of every Gram matrix.
    pub lambda: f64,
    /// Monte Carlo draws per round for the arm probabilities.
    pub mc_samples: usize,
}

impl PolicyConfig {
    pub fn shared(v: f64, lambda: f64, mc_samples: usize) -> Self {
        Self {
            exploration: Exploration::Shared(v),
            lambda,
            mc_samples,
        }
    }

    /// Per-user `v_j` from the theoretical formula, using the true `‖Δ_j‖`
    /// and `R = σ`. Only meaningful for synthetic runs.
    pub fn oracle(env: &Environment, lambda: f64, delta: f64, horizon: u64, mc_samples: usize) -> Self {
        let r = env.params.noise_sigma;
        let d = env.params.dim;
        let vs = env
            .deltas()
            .iter()
            .map(|dj| v_parameter(r, d, horizon, delta, lambda, dj.norm))
            .collect();
        Self {
            exploration: Exploration::PerUser(vs),
            lambda,
            mc_samples,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), PolicyError> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(PolicyError::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.mc_samples == 0 {
            return Err(PolicyError::Config("mc_samples must be >= 1".into()));
        }
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        match &self.exploration {
            Exploration::Shared(v) if !ok(*v) => {
                Err(PolicyError::Config(format!("v must be >= 0, got {v}")))
            }
            Exploration::PerUser(vs) if vs.len() != n => Err(PolicyError::Config(format!(
                "{} per-user exploration scales for {n} users",
                vs.len()
            ))),
            Exploration::PerUser(vs) if !vs.iter().all(|&v| ok(v)) => {
                Err(PolicyError::Config("every v_j must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Ψ contributions of one round: `‖X_t‖_{Γ⁻¹}` and `‖X_t‖_{B⁻¹}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiTerms {
    pub gamma_norm: f64,
    pub gram_norm: f64,
}

/// Center and exploration Gram matrix used for a round's sampling.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub mu_hat: DVector<f64>,
    pub gamma: SpdFactor,
}

/// Everything a policy decided in one round.
#[derive(Debug, Clone)]
pub struct Decision {
    pub arm: usize,
    pub probs: Option<ArmProbs>,
    pub psi: Option<PsiTerms>,
    pub estimate: Option<Estimate>,
}

impl Decision {
    pub fn arm_only(arm: usize) -> Self {
        Self {
            arm,
            probs: None,
            psi: None,
            estimate: None,
        }
    }
}

/// A bandit policy. `select` is called once per round, then `update` with
/// the realized reward of the chosen arm.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn select(
        &mut self,
        user: usize,
        contexts: &ContextSet,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError>;

    fn update(
        &mut self,
        user: usize,
        contexts: &ContextSet,
        decision: &Decision,
        reward: f64,
    ) -> Result<(), PolicyError>;
}

/// Instantiates `kind` for `env`. Only the oracle reads the true parameters.
pub fn build_policy(
    kind: PolicyKind,
    config: &PolicyConfig,
    env: &Environment,
) -> Result<Box<dyn Policy>, PolicyError> {
    config.validate(env.params.n)?;
    let dim = env.params.dim;
    let n = env.params.n;
    Ok(match kind {
        PolicyKind::SemiGraphTs => Box::new(SemiGraphTs::new(env.laplacian.clone(), dim, config.clone())?),
        PolicyKind::SemiTsInd => Box::new(SemiTs::new(Sharing::Independent, n, dim, config.clone())?),
        PolicyKind::SemiTsSin => Box::new(SemiTs::new(Sharing::Single, n, dim, config.clone())?),
        PolicyKind::LinTsInd => Box::new(LinTs::new(Sharing::Independent, n, dim, config.clone())?),
        PolicyKind::LinTsSin => Box::new(LinTs::new(Sharing::Single, n, dim, config.clone())?),
        PolicyKind::GraphUcb => Box::new(GraphUcb::new(env.laplacian.clone(), dim, config.clone())?),
        PolicyKind::Random => Box::new(RandomPolicy),
        PolicyKind::Oracle => Box::new(OraclePolicy::new(env.params.mus.clone())),
    })
}

pub(crate) fn check_user(user: usize, n: usize) -> Result<(), PolicyError> {
    if user >= n {
        return Err(PolicyError::UserOutOfRange { user, n });
    }
    Ok(())
}

pub(crate) fn check_dim(contexts: &ContextSet, dim: usize) -> Result<(), PolicyError> {
    if contexts.dim() != dim {
        return Err(PolicyError::DimensionMismatch {
            got: contexts.dim(),
            expected: dim,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("thompson".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::shared(0.1, 1.0, 10).validate(3).is_ok());
        assert!(PolicyConfig::shared(0.1, 0.0, 10).validate(3).is_err());
        assert!(PolicyConfig::shared(-1.0, 1.0, 10).validate(3).is_err());
        assert!(PolicyConfig::shared(0.1, 1.0, 0).validate(3).is_err());
        let per_user = PolicyConfig {
            exploration: Exploration::PerUser(vec![1.0, 2.0]),
            lambda: 1.0,
            mc_samples: 1,
        };
        assert!(per_user.validate(3).is_err());
        assert!(per_user.validate(2).is_ok());
    }
}
