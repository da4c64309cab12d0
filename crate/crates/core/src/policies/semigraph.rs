use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::state::{ArmProbs, UserState};
use super::{check_dim, check_user, Decision, Estimate, Policy, PolicyConfig, PolicyError, PolicyKind, PsiTerms};
use crate::environment::{argmax_lowest, ContextSet};
use crate::graph::Laplacian;
use crate::linalg::SpdFactor;
use crate::seed::SimRng;

/// Graph-adjusted estimate for user `j`:
/// `μ̂_j = μ̄_j − λ B_j⁻¹ Σ_{k≠j} l_jk μ̄_k`. Only neighbors contribute.
pub fn graph_adjusted_estimate(
    states: &[UserState],
    laplacian: &Laplacian,
    lambda: f64,
    j: usize,
) -> Result<DVector<f64>, PolicyError> {
    check_user(j, states.len())?;
    let own = &states[j];
    if laplacian.degree(j) == 0 {
        return Ok(own.mu_bar().clone());
    }
    let mut pull = DVector::<f64>::zeros(own.dim());
    for (k, l_jk) in laplacian.off_diagonal(j) {
        pull.axpy(l_jk, states[k].mu_bar(), 1.0);
    }
    let correction = own.factor().solve(&pull);
    Ok(own.mu_bar() - correction * lambda)
}

/// Exploration Gram matrix `Γ_j = B_j + λ² Σ_{k≠j} l_jk² B_k⁻¹`.
pub fn exploration_gram(
    states: &[UserState],
    laplacian: &Laplacian,
    lambda: f64,
    j: usize,
) -> DMatrix<f64> {
    let mut gamma = states[j].gram().clone();
    let lambda_sq = lambda * lambda;
    for (k, l_jk) in laplacian.off_diagonal(j) {
        gamma += states[k].gram_inv() * (lambda_sq * l_jk * l_jk);
    }
    gamma
}

/// Theoretical exploration scale
/// `v_j = (4R+12)·sqrt(d·ln((24T⁴/δ)(1 + 1/λ))) + sqrt(λ)(1 + ‖Δ_j‖)`.
pub fn v_parameter(r: f64, d: usize, horizon: u64, delta: f64, lambda: f64, delta_norm: f64) -> f64 {
    let t = horizon as f64;
    let log_term = (24.0 * t.powi(4) / delta * (1.0 + 1.0 / lambda)).ln();
    (4.0 * r + 12.0) * (d as f64 * log_term).sqrt() + lambda.sqrt() * (1.0 + delta_norm)
}

/// Radius of the estimation-error confidence event at round `t`:
/// `(4R+12)·sqrt(2d·ln((24t⁴/δ)(1 + 1/λ))) + sqrt(2λ)(1 + ‖Δ_j‖)`.
pub fn confidence_radius(r: f64, d: usize, t: u64, delta: f64, lambda: f64, delta_norm: f64) -> f64 {
    let t = t as f64;
    let log_term = (24.0 * t.powi(4) / delta * (1.0 + 1.0 / lambda)).ln();
    (4.0 * r + 12.0) * (2.0 * d as f64 * log_term).sqrt() + (2.0 * lambda).sqrt() * (1.0 + delta_norm)
}

/// One posterior draw with its center.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledParam {
    pub mu_tilde: DVector<f64>,
    pub mu_hat: DVector<f64>,
}

/// Draws `μ̃ ~ N(μ̂, v²Γ⁻¹)` given the factor of `Γ`.
pub fn ts_sample<R: Rng + ?Sized>(
    mu_hat: &DVector<f64>,
    gamma: &SpdFactor,
    v: f64,
    rng: &mut R,
) -> SampledParam {
    let z = DVector::<f64>::from_fn(mu_hat.len(), |_, _| StandardNormal.sample(rng));
    let mu_tilde = if v == 0.0 {
        mu_hat.clone()
    } else {
        mu_hat + gamma.color_inverse(&z) * v
    };
    SampledParam {
        mu_tilde,
        mu_hat: mu_hat.clone(),
    }
}

/// Monte Carlo arm probabilities: the argmax frequency of `b_iᵀμ̃` over `M`
/// fresh draws `μ̃ ~ N(μ̂, v²Γ⁻¹)`, ties broken by the lowest index.
///
/// Scores are computed as `Cμ̂ + v·(C L⁻ᵀ) z` with `Γ = L Lᵀ`, which costs
/// `O(dN)` per draw after one `O(d²N)` setup.
pub fn estimate_arm_probs_mc<R: Rng + ?Sized>(
    mu_hat: &DVector<f64>,
    gamma: &SpdFactor,
    v: f64,
    contexts: &ContextSet,
    samples: usize,
    rng: &mut R,
) -> ArmProbs {
    assert!(samples >= 1, "need at least one Monte Carlo draw");
    let arms = contexts.arms();
    let d = mu_hat.len();
    let mut counts = vec![0u64; arms];
    if arms == 1 {
        counts[0] = samples as u64;
        return ArmProbs::from_counts(&counts, contexts);
    }
    let base = contexts.scores(mu_hat);
    let loadings = gamma.rows_times_color_inverse(contexts.matrix());
    let mut z = DVector::<f64>::zeros(d);
    let mut scores = DVector::<f64>::zeros(arms);
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        scores.copy_from(&base);
        scores.gemv(v, &loadings, &z, 1.0);
        counts[argmax_lowest(scores.as_slice())] += 1;
    }
    ArmProbs::from_counts(&counts, contexts)
}

/// Estimates `π̂` by Monte Carlo and draws the arm from `Multinom(π̂)`.
pub fn mc_thompson_round<R: Rng + ?Sized>(
    mu_hat: &DVector<f64>,
    gamma: &SpdFactor,
    v: f64,
    contexts: &ContextSet,
    samples: usize,
    rng: &mut R,
) -> (usize, ArmProbs) {
    let probs = estimate_arm_probs_mc(mu_hat, gamma, v, contexts, samples, rng);
    let arm = probs.sample_arm(rng);
    (arm, probs)
}

/// Graph-regularized semi-parametric Thompson sampling with Monte Carlo
/// arm probabilities.
#[derive(Debug, Clone)]
pub struct SemiGraphTs {
    laplacian: Laplacian,
    config: PolicyConfig,
    states: Vec<UserState>,
}

impl SemiGraphTs {
    pub fn new(laplacian: Laplacian, dim: usize, config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate(laplacian.n())?;
        let states = (0..laplacian.n())
            .map(|j| UserState::new(dim, config.lambda * laplacian.diag(j)))
            .collect();
        Ok(Self {
            laplacian,
            config,
            states,
        })
    }

    pub fn states(&self) -> &[UserState] {
        &self.states
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    /// `μ̂_j` from the current states.
    pub fn estimate(&self, j: usize) -> Result<DVector<f64>, PolicyError> {
        graph_adjusted_estimate(&self.states, &self.laplacian, self.config.lambda, j)
    }

    /// Feeds one observation through the centered update of user `j`, with
    /// caller-supplied arm probabilities.
    pub fn observe(
        &mut self,
        j: usize,
        contexts: &ContextSet,
        probs: &ArmProbs,
        arm: usize,
        reward: f64,
    ) -> Result<DVector<f64>, PolicyError> {
        check_user(j, self.states.len())?;
        Ok(self.states[j].update(contexts, probs, arm, reward)?)
    }
}

impl Policy for SemiGraphTs {
    fn kind(&self) -> PolicyKind {
        PolicyKind::SemiGraphTs
    }

    fn select(
        &mut self,
        user: usize,
        contexts: &ContextSet,
        rng: &mut SimRng,
    ) -> Result<Decision, PolicyError> {
        check_user(user, self.states.len())?;
        check_dim(contexts, self.states[user].dim())?;
        let lambda = self.config.lambda;
        let mu_hat = graph_adjusted_estimate(&self.states, &self.laplacian, lambda, user)?;
        let gamma = SpdFactor::new(&exploration_gram(&self.states, &self.laplacian, lambda, user))?;
        let v = self.config.exploration.for_user(user);
        let (arm, probs) = mc_thompson_round(&mu_hat, &gamma, v, contexts, self.config.mc_samples, rng);
        let x = contexts.arm(arm) - &probs.b_bar;
        let psi = PsiTerms {
            gamma_norm: gamma.inv_norm(&x),
            gram_norm: self.states[user].factor().inv_norm(&x),
        };
        Ok(Decision {
            arm,
            probs: Some(probs),
            psi: Some(psi),
            estimate: Some(Estimate { mu_hat, gamma }),
        })
    }

    fn update(
        &mut self,
        user: usize,
        contexts: &ContextSet,
        decision: &Decision,
        reward: f64,
    ) -> Result<(), PolicyError> {
        let probs = decision
            .probs
            .as_ref()
            .ok_or_else(|| PolicyError::Config("decision carries no arm probabilities".into()))?;
        self.observe(user, contexts, probs, decision.arm, reward)?;
        Ok(())
    }
}
