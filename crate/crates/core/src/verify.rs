//! Randomized numeric checks of the matrix inequalities behind the
//! analysis, plus small statistical checks of the estimators. Used by the
//! `verify` subcommand and the acceptance suite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::environment::{ContextSet, EnvError, EnvSpec, Environment};
use crate::graph::{build_random_walk_laplacian, ensure_connected, generate_er_graph, Laplacian};
use crate::linalg::{max_eigenvalue, min_eigenvalue, symmetrize, SpdFactor};
use crate::policies::{estimate_arm_probs_mc, exploration_gram, ArmProbs, PolicyConfig, SemiGraphTs, UserState};
use crate::seed::{derive_seed, stream, SimRng};

/// Absolute slack allowed on every inequality.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen; negative when every trial held strictly.
    pub worst_margin: f64,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            trials: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
        }
    }

    /// Inequality `lhs ≤ rhs` up to [`SLACK`].
    fn record(&mut self, lhs: f64, rhs: f64) {
        self.record_margin(lhs - rhs, SLACK);
    }

    /// Violation when `margin > tolerance`.
    fn record_margin(&mut self, margin: f64, tolerance: f64) {
        self.trials += 1;
        self.worst_margin = self.worst_margin.max(margin);
        if margin > tolerance {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// A random multi-user state: connected graph on 2..=6 users, dimension
/// 1..=8, `λ` log-uniform on [0.01, 10], and each user's state built from
/// 0..=30 centered updates with random contexts and probabilities.
pub struct Trial {
    pub laplacian: Laplacian,
    pub lambda: f64,
    pub states: Vec<UserState>,
}

fn random_vector(d: usize, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

pub fn random_trial(rng: &mut SimRng) -> Trial {
    let n = rng.random_range(2..=6);
    let d = rng.random_range(1..=8);
    let lambda = 10f64.powf(rng.random_range(-2.0..=1.0));
    let graph = generate_er_graph(n, 0.5, rng).expect("n >= 2");
    let graph = ensure_connected(graph, rng).expect("n >= 2");
    let laplacian = build_random_walk_laplacian(&graph).expect("connected graph has no isolated node");
    let states = (0..n)
        .map(|j| {
            let mut s = UserState::new(d, lambda * laplacian.diag(j));
            for _ in 0..rng.random_range(0..=30) {
                let arms = rng.random_range(1..=5);
                let mut m = DMatrix::<f64>::zeros(arms, d);
                for i in 0..arms {
                    let b = random_vector(d, rng);
                    let scale: f64 = rng.random::<f64>() / b.norm().max(1e-300);
                    m.set_row(i, &(b * scale).transpose());
                }
                let c = ContextSet::new(0, m);
                let raw: Vec<f64> = (0..arms).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                let probs = ArmProbs::new(raw.iter().map(|w| w / total).collect(), &c, 0);
                let arm = probs.sample_arm(rng);
                s.update(&c, &probs, arm, rng.random_range(-1.0..1.0))
                    .expect("updates keep the Gram matrix positive definite");
            }
            s
        })
        .collect();
    Trial {
        laplacian,
        lambda,
        states,
    }
}

/// `xᵀB_j⁻¹y ≤ √2·‖x‖_{Γ_j⁻¹}·‖y‖_{B_j⁻¹}` for random `x, y`.
pub fn cross_term_suite(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("cross-term bound (random vectors)");
    let mut rng = stream(seed, "verify/cross-term");
    for _ in 0..trials {
        let trial = random_trial(&mut rng);
        let j = rng.random_range(0..trial.states.len());
        let b = &trial.states[j];
        let gamma = SpdFactor::new(&exploration_gram(&trial.states, &trial.laplacian, trial.lambda, j))
            .expect("Γ ⪰ B ≻ 0");
        let d = b.dim();
        let x = random_vector(d, &mut rng);
        let y = random_vector(d, &mut rng);
        let lhs = x.dot(&b.factor().solve(&y));
        let rhs = 2f64.sqrt() * gamma.inv_norm(&x) * b.factor().inv_norm(&y);
        report.record(lhs, rhs);
    }
    report
}

/// Worst case over `x, y` of the cross-term bound: the largest eigenvalue of
/// `B^{-1/2} Γ B^{-1/2}` is at most 2.
pub fn cross_term_worst_case_suite(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("cross-term bound (worst case)");
    let mut rng = stream(seed, "verify/cross-term-worst");
    for _ in 0..trials {
        let trial = random_trial(&mut rng);
        let j = rng.random_range(0..trial.states.len());
        let gamma = exploration_gram(&trial.states, &trial.laplacian, trial.lambda, j);
        let l = trial.states[j].factor().lower();
        let half = l.solve_lower_triangular(&gamma).expect("positive diagonal");
        let whitened = l
            .solve_lower_triangular(&half.transpose())
            .expect("positive diagonal");
        report.record(max_eigenvalue(&symmetrize(whitened)), 2.0);
    }
    report
}

/// `‖B_k⁻¹x‖_{B_j⁻¹} ≤ ‖x‖_{B_k⁻¹} / √(λ² l_jj l_kk)` for random `j ≠ k`
/// and random `x`.
pub fn inverse_transfer_suite(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("inverse transfer bound");
    let mut rng = stream(seed, "verify/inverse-transfer");
    for _ in 0..trials {
        let trial = random_trial(&mut rng);
        let n = trial.states.len();
        let j = rng.random_range(0..n);
        let k = (j + rng.random_range(1..n)) % n;
        let (bj, bk) = (&trial.states[j], &trial.states[k]);
        let x = random_vector(bj.dim(), &mut rng);
        let lhs = bj.factor().inv_norm(&bk.factor().solve(&x));
        let scale = (trial.lambda.powi(2) * trial.laplacian.diag(j) * trial.laplacian.diag(k)).sqrt();
        let rhs = bk.factor().inv_norm(&x) / scale;
        report.record(lhs, rhs);
    }
    report
}

/// `Γ_j − B_j ⪰ 0` on random states.
pub fn gram_order_suite(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("exploration Gram dominates Gram");
    let mut rng = stream(seed, "verify/gram-order");
    for _ in 0..trials {
        let trial = random_trial(&mut rng);
        let j = rng.random_range(0..trial.states.len());
        let gamma = exploration_gram(&trial.states, &trial.laplacian, trial.lambda, j);
        let gap = min_eigenvalue(&(gamma - trial.states[j].gram()));
        report.record_margin(-gap, 1e-10);
    }
    report
}

/// Laplacian rows sum to 0 and `Σ_{k≠j} l_jk²/(l_jj l_kk) = 1/deg(j)` on
/// random graphs with up to 200 nodes.
pub fn laplacian_suite(trials: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("Laplacian row sums and neighbor weights");
    let mut rng = stream(seed, "verify/laplacian");
    for _ in 0..trials {
        let n = rng.random_range(2..=200);
        let p = rng.random_range(0.01..=1.0);
        let g = ensure_connected(generate_er_graph(n, p, &mut rng).expect("n >= 2"), &mut rng).expect("n >= 2");
        let l = build_random_walk_laplacian(&g).expect("connected");
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let row_sum: f64 = l.matrix().row(j).sum();
            let weight: f64 = l.off_diagonal(j).map(|(k, v)| v * v / (l.diag(j) * l.diag(k))).sum();
            worst = worst.max(row_sum.abs()).max((weight - 1.0 / l.degree(j) as f64).abs());
        }
        report.record_margin(worst, 1e-12);
    }
    report
}

/// Every randomized suite, `trials` each.
pub fn all_suites(trials: usize, seed: u64) -> Vec<CheckReport> {
    vec![
        cross_term_suite(trials, seed),
        cross_term_worst_case_suite(trials, seed),
        inverse_transfer_suite(trials, seed),
        gram_order_suite(trials, seed),
        laplacian_suite((trials / 10).max(1), seed),
    ]
}

/// Mean over users of `‖μ̂_j − μ_j‖` at each checkpoint, when SemiGraphTS's
/// update path is fed uniformly random arms with the exact uniform `π`.
pub fn estimator_error_curve(
    spec: &EnvSpec,
    lambda: f64,
    checkpoints: &[u64],
    seed: u64,
) -> Result<Vec<(u64, f64)>, EnvError> {
    let env = Environment::generate(spec, seed)?;
    let mut policy = SemiGraphTs::new(env.laplacian.clone(), spec.dim, PolicyConfig::shared(0.0, lambda, 1))
        .expect("valid configuration");
    let mut arrivals = stream(seed, "consistency/arrivals");
    let mut contexts_rng = stream(seed, "consistency/contexts");
    let mut arms = stream(seed, "consistency/arms");
    let mut noise = stream(seed, "consistency/noise");
    let horizon = checkpoints.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(checkpoints.len());
    for t in 1..=horizon {
        let user = arrivals.random_range(0..spec.n);
        let c = env.sample_contexts(t, &mut contexts_rng);
        let probs = ArmProbs::uniform(&c);
        let arm = probs.sample_arm(&mut arms);
        let outcome = env.play(user, arm, &c, &mut noise);
        policy
            .observe(user, &c, &probs, arm, outcome.reward)
            .expect("updates keep the Gram matrix positive definite");
        if checkpoints.contains(&t) {
            let err: f64 = (0..spec.n)
                .map(|j| (policy.estimate(j).expect("valid user") - env.params.mu(j)).norm())
                .sum::<f64>()
                / spec.n as f64;
            out.push((t, err));
        }
    }
    Ok(out)
}

/// `π̂_1` for two arms `{+1, −1}` in one dimension with `μ̂ = 0.5` and unit
/// sampling variance; the exact value is `Φ(0.5)`.
pub fn mc_two_arm(samples: usize, seed: u64) -> f64 {
    let contexts = ContextSet::from_rows(0, &[&[1.0], &[-1.0]]);
    let gamma = SpdFactor::new(&DMatrix::identity(1, 1)).expect("identity");
    let mu_hat = DVector::from_element(1, 0.5);
    let mut rng = stream(derive_seed(seed, "verify/mc-two-arm"), "draws");
    estimate_arm_probs_mc(&mu_hat, &gamma, 1.0, &contexts, samples, &mut rng).pi_hat[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Scenario;

    #[test]
    fn suites_hold_on_small_runs() {
        for report in all_suites(100, 1) {
            assert!(report.passed(), "{report:?}");
            assert!(report.trials > 0);
        }
    }

    #[test]
    fn trials_stay_in_range() {
        let mut rng = stream(4, "t");
        for _ in 0..50 {
            let t = random_trial(&mut rng);
            let n = t.states.len();
            assert!((2..=6).contains(&n));
            assert!((1..=8).contains(&t.states[0].dim()));
            assert!((0.01..=10.0).contains(&t.lambda));
        }
    }

    #[test]
    fn report_counts_violations() {
        let mut r = CheckReport::new("x");
        r.record(1.0, 1.0 + 1e-12);
        r.record(1.0 + 1e-10, 1.0);
        r.record(1.1, 1.0);
        assert_eq!((r.trials, r.violations), (3, 1));
        assert!((r.worst_margin - 0.1).abs() < 1e-12);
    }

    #[test]
    fn estimator_error_shrinks() {
        let spec = EnvSpec {
            n: 4,
            arms: 4,
            dim: 8,
            scenario: Scenario::Stationary,
            ..EnvSpec::default()
        };
        let curve = estimator_error_curve(&spec, 1.0, &[200, 2000], 3).unwrap();
        assert_eq!(curve.len(), 2);
        assert!(curve[1].1 < curve[0].1);
    }

    #[test]
    fn mc_two_arm_is_near_cdf() {
        let p = mc_two_arm(10_000, 0);
        let phi = 0.691_462_461_274_013_1;
        assert!((p - phi).abs() <= 4.0 * (phi * (1.0 - phi) / 10_000f64).sqrt());
    }
}
