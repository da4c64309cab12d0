//! Semi-parametric reward model and the synthetic data generator.
//!
//! Rewards follow `r_ij(t) = ν_j(t) + b_i(t)ᵀμ_j + η`, with block-sphere
//! contexts, graph-smoothed user parameters, and Gaussian noise.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_random_walk_laplacian, compute_deltas, ensure_connected, generate_er_graph, Delta,
    GraphError, Laplacian, UserGraph,
};
use crate::linalg::symmetrize;
use crate::seed::stream;

/// Graph resamples tried when the smoothing system is not positive definite.
pub const MAX_GRAPH_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("context dimension {dim} is not divisible by the arm count {arms}")]
    IndivisibleDimension { dim: usize, arms: usize },
    #[error("invalid environment setting: {0}")]
    Invalid(String),
    #[error("smoothing system I + (γ/2)(L + Lᵀ) is not positive definite at γ = {gamma}")]
    NonConvexSmoothing { gamma: f64 },
    #[error("no graph with a convex smoothing objective after {attempts} attempts")]
    GraphAttemptsExhausted { attempts: usize },
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Baseline-reward scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `ν_j(t) = 0`.
    Stationary,
    /// `ν_j(t) = −max_i b_i(t)ᵀμ_j`: the optimal arm always has mean 0.
    AdversarialOptimal,
}

/// Generator settings for a synthetic environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    /// Users.
    pub n: usize,
    /// Arms per round.
    pub arms: usize,
    /// Context dimension; must be a multiple of `arms`.
    pub dim: usize,
    /// Erdős–Rényi edge probability.
    pub edge_prob: f64,
    /// Laplacian smoothing strength for the true parameters.
    pub gamma: f64,
    pub noise_sigma: f64,
    pub scenario: Scenario,
    /// Fraction of users whose parameter sign is flipped after generation.
    pub misspecified_fraction: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            n: 10,
            arms: 5,
            dim: 20,
            edge_prob: 0.4,
            gamma: 5.0,
            noise_sigma: 0.1,
            scenario: Scenario::AdversarialOptimal,
            misspecified_fraction: 0.0,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n == 0 || self.arms == 0 || self.dim == 0 {
            return Err(EnvError::Invalid("n, arms and dim must be positive".into()));
        }
        if self.dim % self.arms != 0 {
            return Err(EnvError::IndivisibleDimension {
                dim: self.dim,
                arms: self.arms,
            });
        }
        if !(self.gamma >= 0.0) {
            return Err(EnvError::Invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(EnvError::Invalid(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.misspecified_fraction) {
            return Err(EnvError::Invalid(format!(
                "misspecified_fraction must lie in [0, 1], got {}",
                self.misspecified_fraction
            )));
        }
        if self.n > 1 && !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(GraphError::BadProbability(self.edge_prob).into());
        }
        Ok(())
    }
}

/// True parameters and noise model of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub n: usize,
    pub arms: usize,
    pub dim: usize,
    /// Row `j` is `μ_j`; every row has norm ≤ 1.
    pub mus: DMatrix<f64>,
    /// Standard deviation of the Gaussian noise; also the sub-Gaussian scale R.
    pub noise_sigma: f64,
    pub scenario: Scenario,
}

impl EnvParams {
    pub fn block_size(&self) -> usize {
        self.dim / self.arms
    }

    pub fn mu(&self, j: usize) -> DVector<f64> {
        self.mus.row(j).transpose()
    }
}

/// The `N` context vectors of one round, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    pub round: u64,
    vectors: DMatrix<f64>,
}

impl ContextSet {
    pub fn new(round: u64, vectors: DMatrix<f64>) -> Self {
        Self { round, vectors }
    }

    /// Builds a context set from row slices.
    pub fn from_rows(round: u64, rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(round, DMatrix::from_row_slice(rows.len(), dim, &flat))
    }

    pub fn arms(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn arm(&self, i: usize) -> DVector<f64> {
        self.vectors.row(i).transpose()
    }

    /// `b_iᵀθ` for every arm.
    pub fn scores(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.vectors * theta
    }
}

/// Lowest index attaining the maximum.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Lowest-index maximizer of `b_iᵀμ`.
pub fn optimal_arm(contexts: &ContextSet, mu: &DVector<f64>) -> usize {
    argmax_lowest(contexts.scores(mu).as_slice())
}

/// Block-sphere contexts: arm `i` is `z_i` placed in block `i` and zero
/// elsewhere, with each `z_i` uniform on the unit sphere of the block.
pub fn sample_contexts<R: Rng + ?Sized>(
    arms: usize,
    dim: usize,
    round: u64,
    rng: &mut R,
) -> Result<ContextSet, EnvError> {
    if arms == 0 || dim % arms != 0 {
        return Err(EnvError::IndivisibleDimension { dim, arms });
    }
    let block = dim / arms;
    let mut vectors = DMatrix::<f64>::zeros(arms, dim);
    let mut z = vec![0.0; block];
    for i in 0..arms {
        loop {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (c, v) in z.iter().enumerate() {
                    vectors[(i, i * block + c)] = v / norm;
                }
                break;
            }
        }
    }
    Ok(ContextSet::new(round, vectors))
}

/// `ν_j(t)` for the given scenario.
pub fn baseline_reward(scenario: Scenario, mu: &DVector<f64>, contexts: &ContextSet) -> f64 {
    match scenario {
        Scenario::Stationary => 0.0,
        Scenario::AdversarialOptimal => {
            let scores = contexts.scores(mu);
            -scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Solves `(I + (γ/2)(L + Lᵀ)) μ = μ0` column by column: the stationary
/// point of `‖μ − μ0‖² + γ μᵀ(L ⊗ I)μ`, which is its minimizer exactly when
/// the system matrix is positive definite. Otherwise an error is returned.
pub fn smooth_parameters(
    l: &Laplacian,
    gamma: f64,
    mu0: &DMatrix<f64>,
) -> Result<DMatrix<f64>, EnvError> {
    let n = l.n();
    if mu0.nrows() != n {
        return Err(GraphError::DimensionMismatch {
            what: "initial parameter rows",
            got: mu0.nrows(),
            expected: n,
        }
        .into());
    }
    if gamma == 0.0 {
        return Ok(mu0.clone());
    }
    let system = DMatrix::<f64>::identity(n, n) + symmetrize(l.matrix().clone()) * gamma;
    let chol = nalgebra::Cholesky::new(system).ok_or(EnvError::NonConvexSmoothing { gamma })?;
    Ok(chol.solve(mu0))
}

/// Divides every row by the largest row norm, so that `max_j ‖μ_j‖ = 1`.
pub fn rescale_to_unit_ball(mut mus: DMatrix<f64>) -> DMatrix<f64> {
    let max = (0..mus.nrows())
        .map(|j| mus.row(j).norm())
        .fold(0.0_f64, f64::max);
    if max > 0.0 {
        mus /= max;
    }
    mus
}

/// Draws `μ0` with i.i.d. standard normal entries (row by row), smooths it
/// over the graph and rescales it into the unit ball.
pub fn generate_user_params<R: Rng + ?Sized>(
    l: &Laplacian,
    gamma: f64,
    dim: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, EnvError> {
    if !(gamma >= 0.0) {
        return Err(EnvError::Invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    let n = l.n();
    let mut mu0 = DMatrix::<f64>::zeros(n, dim);
    for j in 0..n {
        for c in 0..dim {
            mu0[(j, c)] = StandardNormal.sample(rng);
        }
    }
    Ok(rescale_to_unit_ball(smooth_parameters(l, gamma, &mu0)?))
}

/// Flips the sign of `μ_j` for `round(fraction·n)` users chosen uniformly.
/// Returns the flipped users in ascending order.
pub fn misspecify<R: Rng + ?Sized>(mus: &mut DMatrix<f64>, fraction: f64, rng: &mut R) -> Vec<usize> {
    let n = mus.nrows();
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut flipped = index::sample(rng, n, count).into_vec();
    flipped.sort_unstable();
    for &j in &flipped {
        let neg = -mus.row(j);
        mus.set_row(j, &neg);
    }
    flipped
}

/// Per-round outcome of pulling an arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub chosen_arm: usize,
    pub optimal_arm: usize,
    pub reward: f64,
    /// `b_{a*}ᵀμ − b_aᵀμ ≥ 0`.
    pub regret: f64,
    /// `ν + b_aᵀμ`, the expected reward of the chosen arm.
    pub expected_reward: f64,
    /// Regret the worst arm would have incurred this round.
    pub worst_regret: f64,
}

/// A generated problem instance: graph, Laplacian, and true parameters.
#[derive(Debug, Clone)]
pub struct Environment {
    pub graph: UserGraph,
    pub laplacian: Laplacian,
    pub params: EnvParams,
    deltas: Vec<Delta>,
}

impl Environment {
    pub fn new(graph: UserGraph, params: EnvParams) -> Result<Self, EnvError> {
        if graph.node_count() != params.n || params.mus.nrows() != params.n {
            return Err(GraphError::DimensionMismatch {
                what: "graph nodes",
                got: graph.node_count(),
                expected: params.n,
            }
            .into());
        }
        if params.mus.ncols() != params.dim {
            return Err(GraphError::DimensionMismatch {
                what: "parameter columns",
                got: params.mus.ncols(),
                expected: params.dim,
            }
            .into());
        }
        if params.arms == 0 || params.dim % params.arms != 0 {
            return Err(EnvError::IndivisibleDimension {
                dim: params.dim,
                arms: params.arms,
            });
        }
        let laplacian = build_random_walk_laplacian(&graph)?;
        let deltas = compute_deltas(&laplacian, &params.mus)?;
        Ok(Self {
            graph,
            laplacian,
            params,
            deltas,
        })
    }

    /// Generates an environment from `spec`. Graph, parameters and sign
    /// flips draw from separate streams under `seed`. A graph whose
    /// smoothing system is indefinite is redrawn.
    pub fn generate(spec: &EnvSpec, seed: u64) -> Result<Self, EnvError> {
        spec.validate()?;
        for attempt in 0..MAX_GRAPH_ATTEMPTS {
            let mut graph_rng = stream(seed, &format!("env/graph/{attempt}"));
            let graph = if spec.n == 1 {
                UserGraph::empty(1)
            } else {
                let g = generate_er_graph(spec.n, spec.edge_prob, &mut graph_rng)?;
                ensure_connected(g, &mut graph_rng)?
            };
            let laplacian = build_random_walk_laplacian(&graph)?;
            let mut mu_rng = stream(seed, &format!("env/mu0/{attempt}"));
            let mut mus = match generate_user_params(&laplacian, spec.gamma, spec.dim, &mut mu_rng) {
                Ok(m) => m,
                Err(EnvError::NonConvexSmoothing { gamma }) => {
                    log::warn!("graph attempt {attempt}: smoothing not convex at gamma={gamma}; redrawing");
                    continue;
                }
                Err(e) => return Err(e),
            };
            if spec.misspecified_fraction > 0.0 {
                misspecify(&mut mus, spec.misspecified_fraction, &mut stream(seed, "env/misspec"));
            }
            let params = EnvParams {
                n: spec.n,
                arms: spec.arms,
                dim: spec.dim,
                mus,
                noise_sigma: spec.noise_sigma,
                scenario: spec.scenario,
            };
            return Self::new(graph, params);
        }
        Err(EnvError::GraphAttemptsExhausted {
            attempts: MAX_GRAPH_ATTEMPTS,
        })
    }

    pub fn deltas(&self) -> &[Delta] {
        &self.deltas
    }

    pub fn sample_contexts<R: Rng + ?Sized>(&self, round: u64, rng: &mut R) -> ContextSet {
        sample_contexts(self.params.arms, self.params.dim, round, rng)
            .expect("validated at construction")
    }

    pub fn baseline_reward(&self, user: usize, contexts: &ContextSet) -> f64 {
        baseline_reward(self.params.scenario, &self.params.mu(user), contexts)
    }

    /// `ν_j(t) + b_i(t)ᵀμ_j + η` with `η ~ N(0, σ²)`. One normal is drawn per
    /// call regardless of `σ`, keeping the noise stream aligned across policies.
    pub fn realize_reward<R: Rng + ?Sized>(
        &self,
        user: usize,
        arm: usize,
        contexts: &ContextSet,
        noise: &mut R,
    ) -> f64 {
        let mu = self.params.mu(user);
        let eta: f64 = StandardNormal.sample(noise);
        let nu = baseline_reward(self.params.scenario, &mu, contexts);
        nu + contexts.arm(arm).dot(&mu) + self.params.noise_sigma * eta
    }

    /// Pulls `arm` for `user` and scores the pull against the true parameters.
    pub fn play<R: Rng + ?Sized>(
        &self,
        user: usize,
        arm: usize,
        contexts: &ContextSet,
        noise: &mut R,
    ) -> RoundOutcome {
        let mu = self.params.mu(user);
        let scores = contexts.scores(&mu);
        let optimal = argmax_lowest(scores.as_slice());
        let worst = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let nu = baseline_reward(self.params.scenario, &mu, contexts);
        let eta: f64 = StandardNormal.sample(noise);
        RoundOutcome {
            chosen_arm: arm,
            optimal_arm: optimal,
            reward: nu + scores[arm] + self.params.noise_sigma * eta,
            regret: scores[optimal] - scores[arm],
            expected_reward: nu + scores[arm],
            worst_regret: scores[optimal] - worst,
        }
    }

    pub fn to_snapshot(&self, seed: u64) -> EnvSnapshot {
        EnvSnapshot {
            n: self.params.n,
            arms: self.params.arms,
            dim: self.params.dim,
            scenario: self.params.scenario,
            noise_sigma: self.params.noise_sigma,
            seed,
            edges: self.graph.edges().map(|(j, k)| [j + 1, k + 1]).collect(),
            mus: (0..self.params.n)
                .map(|j| self.params.mus.row(j).iter().copied().collect())
                .collect(),
        }
    }

    pub fn from_snapshot(s: &EnvSnapshot) -> Result<Self, EnvError> {
        let graph = UserGraph::from_edges(
            s.n,
            s.edges.iter().map(|&[j, k]| (j.wrapping_sub(1), k.wrapping_sub(1))),
        )?;
        if s.mus.len() != s.n || s.mus.iter().any(|row| row.len() != s.dim) {
            return Err(EnvError::Invalid("parameter matrix does not match n x dim".into()));
        }
        let flat: Vec<f64> = s.mus.iter().flatten().copied().collect();
        let params = EnvParams {
            n: s.n,
            arms: s.arms,
            dim: s.dim,
            mus: DMatrix::from_row_slice(s.n, s.dim, &flat),
            noise_sigma: s.noise_sigma,
            scenario: s.scenario,
        };
        Self::new(graph, params)
    }
}

/// Replayable description of an environment (JSON on disk). Edges are
/// 1-indexed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSnapshot {
    pub n: usize,
    pub arms: usize,
    pub dim: usize,
    pub scenario: Scenario,
    pub noise_sigma: f64,
    pub seed: u64,
    pub edges: Vec<[usize; 2]>,
    pub mus: Vec<Vec<f64>>,
}

impl EnvSnapshot {
    pub fn write(&self, path: &Path) -> Result<(), EnvError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
