use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use super::HarnessError;
use crate::environment::{ContextSet, Environment};
use crate::policies::{confidence_radius, ArmProbs, Decision, Estimate, Policy, PolicyKind, PsiTerms};
use crate::seed::{stream, SimRng};

/// One evaluated round. `user`, `arm` and `optimal_arm` are 0-based here.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub user: usize,
    pub arm: usize,
    pub optimal_arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub psi: Option<PsiTerms>,
    /// Regret of the worst arm this round.
    pub worst_regret: f64,
    /// `max_i |b_iᶜᵀ(μ̂ − μ)| / ‖b_iᶜ‖_{Γ⁻¹}` when the policy exposes its estimate.
    pub coverage_ratio: Option<f64>,
}

/// The record of one policy run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub policy: PolicyKind,
    pub replication: u64,
    pub records: Vec<RoundRecord>,
    pub elapsed: Duration,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Cumulative regret after round `t` (0 before the first round).
    pub fn cum_regret_at(&self, t: u64) -> f64 {
        match t {
            0 => 0.0,
            t => self.records[(t as usize).min(self.records.len()) - 1].cum_regret,
        }
    }
}

/// Independent random streams of one run. Arrivals, contexts and noise
/// depend only on the seed, so every policy sees the same sequence.
pub struct RunStreams {
    pub arrivals: SimRng,
    pub contexts: SimRng,
    pub noise: SimRng,
    pub policy: SimRng,
}

impl RunStreams {
    pub fn new(seed: u64, policy: PolicyKind) -> Self {
        Self {
            arrivals: stream(seed, "run/arrivals"),
            contexts: stream(seed, "run/contexts"),
            noise: stream(seed, "run/noise"),
            policy: stream(seed, &format!("policy/{}", policy.name())),
        }
    }
}

/// Runs `policy` for `horizon` rounds against `env`. Users arrive uniformly
/// at random. Regret is scored with the true parameters, which the policy
/// never sees.
pub fn run_simulation(
    env: &Environment,
    policy: &mut dyn Policy,
    horizon: u64,
    seed: u64,
    replication: u64,
) -> Result<Trace, HarnessError> {
    let started = Instant::now();
    let mut streams = RunStreams::new(seed, policy.kind());
    let n = env.params.n;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut cum = 0.0;
    for t in 1..=horizon {
        let user = streams.arrivals.random_range(0..n);
        let contexts = env.sample_contexts(t, &mut streams.contexts);
        let decision = policy
            .select(user, &contexts, &mut streams.policy)
            .map_err(|source| HarnessError::Policy { round: t, source })?;
        let outcome = env.play(user, decision.arm, &contexts, &mut streams.noise);
        let coverage_ratio = coverage_ratio(&decision, &contexts, &env.params.mu(user));
        policy
            .update(user, &contexts, &decision, outcome.reward)
            .map_err(|source| HarnessError::Policy { round: t, source })?;
        cum += outcome.regret;
        records.push(RoundRecord {
            t,
            user,
            arm: decision.arm,
            optimal_arm: outcome.optimal_arm,
            reward: outcome.reward,
            regret: outcome.regret,
            cum_regret: cum,
            psi: decision.psi,
            worst_regret: outcome.worst_regret,
            coverage_ratio,
        });
    }
    Ok(Trace {
        policy: policy.kind(),
        replication,
        records,
        elapsed: started.elapsed(),
    })
}

fn coverage_ratio(decision: &Decision, contexts: &ContextSet, mu: &DVector<f64>) -> Option<f64> {
    match (&decision.estimate, &decision.probs) {
        (Some(est), Some(probs)) => Some(centered_error_ratio(est, probs, contexts, mu)),
        _ => None,
    }
}

/// `max_i |b_iᶜᵀ(μ̂ − μ)| / ‖b_iᶜ‖_{Γ⁻¹}` with `b_iᶜ = b_i − b̄`. Arms with
/// `b_iᶜ = 0` contribute nothing.
pub fn centered_error_ratio(
    estimate: &Estimate,
    probs: &ArmProbs,
    contexts: &ContextSet,
    mu: &DVector<f64>,
) -> f64 {
    let err = &estimate.mu_hat - mu;
    let mut worst: f64 = 0.0;
    for i in 0..contexts.arms() {
        let c = contexts.arm(i) - &probs.b_bar;
        let lhs = c.dot(&err).abs();
        let scale = estimate.gamma.inv_norm(&c);
        let ratio = if scale > 0.0 {
            lhs / scale
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(ratio);
    }
    worst
}

/// Per-user `Ψ_j = Σ ‖X_t‖_{Γ⁻¹} / Σ ‖X_t‖_{B⁻¹}` over the rounds that served
/// `j`. `None` when the user was never served or every `X_t` was zero.
pub fn psi_diagnostic(trace: &Trace, n: usize) -> Vec<Option<f64>> {
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for rec in &trace.records {
        if let Some(psi) = rec.psi {
            num[rec.user] += psi.gamma_norm;
            den[rec.user] += psi.gram_norm;
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &b)| if b > 0.0 { Some(a / b) } else { None })
        .collect()
}

/// Outcome of the estimation-error coverage check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub rounds_checked: u64,
    pub violations: u64,
}

impl CoverageReport {
    pub fn frequency(&self) -> f64 {
        if self.rounds_checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.rounds_checked as f64
        }
    }
}

/// Fraction of rounds where some arm's centered estimation error exceeds
/// `‖b_iᶜ‖_{Γ⁻¹}·α(t)`. `R` is the environment's noise scale and `‖Δ_j‖` the
/// true smoothness deviation of the served user.
pub fn coverage_check(trace: &Trace, env: &Environment, lambda: f64, delta: f64) -> CoverageReport {
    let mut report = CoverageReport {
        rounds_checked: 0,
        violations: 0,
    };
    for rec in &trace.records {
        let Some(ratio) = rec.coverage_ratio else { continue };
        let alpha = confidence_radius(
            env.params.noise_sigma,
            env.params.dim,
            rec.t,
            delta,
            lambda,
            env.deltas()[rec.user].norm,
        );
        report.rounds_checked += 1;
        if ratio > alpha {
            report.violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvSpec, Scenario};
    use crate::policies::{build_policy, PolicyConfig, RandomPolicy, SemiGraphTs};

    fn small_env(scenario: Scenario) -> Environment {
        let spec = EnvSpec {
            n: 5,
            arms: 4,
            dim: 8,
            scenario,
            ..EnvSpec::default()
        };
        Environment::generate(&spec, 3).unwrap()
    }

    #[test]
    fn oracle_has_zero_regret() {
        let env = small_env(Scenario::AdversarialOptimal);
        let mut p = build_policy(PolicyKind::Oracle, &PolicyConfig::shared(0.0, 1.0, 1), &env).unwrap();
        let trace = run_simulation(&env, p.as_mut(), 500, 1, 0).unwrap();
        assert_eq!(trace.len(), 500);
        assert_eq!(trace.final_regret(), 0.0);
    }

    #[test]
    fn reruns_are_identical() {
        let env = small_env(Scenario::AdversarialOptimal);
        let config = PolicyConfig::shared(0.1, 0.2, 50);
        let run = || {
            let mut p = build_policy(PolicyKind::SemiGraphTs, &config, &env).unwrap();
            run_simulation(&env, p.as_mut(), 300, 9, 0).unwrap().records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cumulative_regret_is_monotone_and_below_ceiling() {
        let env = small_env(Scenario::Stationary);
        for kind in [PolicyKind::LinTsInd, PolicyKind::GraphUcb, PolicyKind::SemiTsSin, PolicyKind::Random] {
            let mut p = build_policy(kind, &PolicyConfig::shared(0.1, 1.0, 20), &env).unwrap();
            let trace = run_simulation(&env, p.as_mut(), 300, 4, 0).unwrap();
            let mut ceiling = 0.0;
            let mut prev = 0.0;
            for r in &trace.records {
                ceiling += r.worst_regret;
                assert!(r.cum_regret >= prev);
                assert!(r.cum_regret <= ceiling + 1e-12);
                prev = r.cum_regret;
            }
            assert!(trace.records.iter().all(|r| r.psi.is_none()));
        }
    }

    #[test]
    fn random_policy_slope_matches_mean_gap() {
        // brute-force estimate of E[max_i b_iᵀμ − mean_i b_iᵀμ] per user
        let env = small_env(Scenario::Stationary);
        let mut rng = stream(77, "oracle-gap");
        let samples = 200_000;
        let mut gap = 0.0;
        for s in 0..samples {
            let user = s % env.params.n;
            let c = env.sample_contexts(0, &mut rng);
            let scores = c.scores(&env.params.mu(user));
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            gap += max - scores.mean();
        }
        let expected = gap / samples as f64;
        let horizon = 20_000;
        let trace = run_simulation(&env, &mut RandomPolicy, horizon, 5, 0).unwrap();
        let per_round: Vec<f64> = trace.records.iter().map(|r| r.regret).collect();
        let mean = per_round.iter().sum::<f64>() / horizon as f64;
        let var = per_round.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (horizon - 1) as f64;
        let se = (var / horizon as f64).sqrt();
        assert!((mean - expected).abs() <= 4.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn psi_is_one_on_single_node() {
        let spec = EnvSpec {
            n: 1,
            arms: 2,
            dim: 4,
            ..EnvSpec::default()
        };
        let env = Environment::generate(&spec, 1).unwrap();
        let mut p = build_policy(PolicyKind::SemiGraphTs, &PolicyConfig::shared(0.5, 1.0, 30), &env).unwrap();
        let trace = run_simulation(&env, p.as_mut(), 200, 1, 0).unwrap();
        assert_eq!(psi_diagnostic(&trace, 1), vec![Some(1.0)]);
    }

    #[test]
    fn psi_below_one_on_connected_graph() {
        let env = small_env(Scenario::AdversarialOptimal);
        let mut p = build_policy(PolicyKind::SemiGraphTs, &PolicyConfig::shared(0.5, 1.0, 30), &env).unwrap();
        let trace = run_simulation(&env, p.as_mut(), 400, 1, 0).unwrap();
        for psi in psi_diagnostic(&trace, 5) {
            let psi = psi.unwrap();
            assert!(psi > 0.0 && psi < 1.0, "psi {psi}");
        }
    }

    #[test]
    fn psi_absent_for_unserved_user() {
        let env = small_env(Scenario::AdversarialOptimal);
        let mut p = SemiGraphTs::new(env.laplacian.clone(), 8, PolicyConfig::shared(0.5, 1.0, 30)).unwrap();
        let trace = run_simulation(&env, &mut p, 1, 1, 0).unwrap();
        let psi = psi_diagnostic(&trace, 5);
        assert_eq!(psi.iter().filter(|p| p.is_none()).count(), 4);
    }

    #[test]
    fn coverage_holds_at_first_round() {
        let env = small_env(Scenario::AdversarialOptimal);
        let mut p = build_policy(PolicyKind::SemiGraphTs, &PolicyConfig::shared(0.1, 1.0, 30), &env).unwrap();
        let trace = run_simulation(&env, p.as_mut(), 1, 2, 0).unwrap();
        let report = coverage_check(&trace, &env, 1.0, 0.1);
        assert_eq!(report.rounds_checked, 1);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn coverage_frequency_grows_with_delta() {
        let env = small_env(Scenario::AdversarialOptimal);
        let mut p = build_policy(PolicyKind::SemiGraphTs, &PolicyConfig::shared(0.01, 0.04, 30), &env).unwrap();
        let trace = run_simulation(&env, p.as_mut(), 400, 2, 0).unwrap();
        let mut prev = 0.0;
        for delta in [1e-6, 1e-3, 0.1, 0.5, 0.99] {
            let f = coverage_check(&trace, &env, 0.04, delta).frequency();
            assert!(f >= prev);
            prev = f;
        }
    }
}
