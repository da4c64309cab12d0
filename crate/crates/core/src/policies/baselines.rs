use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::semigraph::{mc_thompson_round, ts_sample};
use super::state::UserState;
use super::{check_dim, check_user, Decision, Estimate, Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::environment::{argmax_lowest, optimal_arm, ContextSet};
use crate::graph::Laplacian;
use crate::linalg::SpdFactor;
use crate::seed::SimRng;

/// How a baseline shares statistics across users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// One state per user.
    Independent,
    /// One state for everybody, updated every round.
    Single,
}

fn build_states(sharing: Sharing, n: usize, dim: usize, ridge: f64) -> Vec<UserState> {
    let count = match sharing {
        Sharing::Independent => n,
        Sharing::Single => 1,
    };
    vec![UserState::new(dim, ridge); count]
}

fn slot(sharing: Sharing, user: usize) -> usize {
    match sharing {
        Sharing::Independent => user,
        Sharing::Single => 0,
    }
}

/// Semi-parametric Thompson sampling without the graph: `μ̂ = μ̄`, `Γ = B`.
#[derive(Debug, Clone)]
pub struct SemiTs {
    sharing: Sharing,
    n: usize,
    config: PolicyConfig,
    states: Vec<UserState>,
}

impl SemiTs {
    pub fn new(sharing: Sharing, n: usize, dim: usize, config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate(n)?;
        Ok(Self {
            sharing,
            n,
            states: build_states(sharing, n, dim, config.lambda),
            config,
        })
    }

    pub fn states(&self) -> &[UserState] {
        &self.states
    }
}

impl Policy for SemiTs {
    fn kind(&self) -> PolicyKind {
        match self.sharing {
            Sharing::Independent => PolicyKind::SemiTsInd,
            Sharing::Single => PolicyKind::SemiTsSin,
        }
    }

    fn select(&mut self, user: usize, contexts: &ContextSet, rng: &mut SimRng) -> Result<Decision, PolicyError> {
        check_user(user, self.n)?;
        let state = &self.states[slot(self.sharing, user)];
        check_dim(contexts, state.dim())?;
        let mu_hat = state.mu_bar().clone();
        let gamma = SpdFactor::new(state.gram())?;
        let v = self.config.exploration.for_user(user);
        let (arm, probs) = mc_thompson_round(&mu_hat, &gamma, v, contexts, self.config.mc_samples, rng);
        Ok(Decision {
            arm,
            probs: Some(probs),
            psi: None,
            estimate: Some(Estimate { mu_hat, gamma }),
        })
    }

    fn update(&mut self, user: usize, contexts: &ContextSet, decision: &Decision, reward: f64) -> Result<(), PolicyError> {
        check_user(user, self.n)?;
        let probs = decision
            .probs
            .as_ref()
            .ok_or_else(|| PolicyError::Config("decision carries no arm probabilities".into()))?;
        self.states[slot(self.sharing, user)].update(contexts, probs, decision.arm, reward)?;
        Ok(())
    }
}

/// Linear Thompson sampling on uncentered ridge statistics.
#[derive(Debug, Clone)]
pub struct LinTs {
    sharing: Sharing,
    n: usize,
    config: PolicyConfig,
    states: Vec<UserState>,
}

impl LinTs {
    pub fn new(sharing: Sharing, n: usize, dim: usize, config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate(n)?;
        Ok(Self {
            sharing,
            n,
            states: build_states(sharing, n, dim, config.lambda),
            config,
        })
    }

    pub fn states(&self) -> &[UserState] {
        &self.states
    }
}

impl Policy for LinTs {
    fn kind(&self) -> PolicyKind {
        match self.sharing {
            Sharing::Independent => PolicyKind::LinTsInd,
            Sharing::Single => PolicyKind::LinTsSin,
        }
    }

    fn select(&mut self, user: usize, contexts: &ContextSet, rng: &mut SimRng) -> Result<Decision, PolicyError> {
        check_user(user, self.n)?;
        let state = &self.states[slot(self.sharing, user)];
        check_dim(contexts, state.dim())?;
        let v = self.config.exploration.for_user(user);
        let sample = ts_sample(state.mu_bar(), state.factor(), v, rng);
        let arm = argmax_lowest(contexts.scores(&sample.mu_tilde).as_slice());
        Ok(Decision::arm_only(arm))
    }

    fn update(&mut self, user: usize, contexts: &ContextSet, decision: &Decision, reward: f64) -> Result<(), PolicyError> {
        check_user(user, self.n)?;
        self.states[slot(self.sharing, user)].update_raw(&contexts.arm(decision.arm), reward)?;
        Ok(())
    }
}

/// Laplacian-regularized UCB with per-user ridge statistics `C_j` and the
/// adjustment `μ̂_j = μ̄_j − λ C_j⁻¹ Σ_k l_jk μ̄_k`.
#[derive(Debug, Clone)]
pub struct GraphUcb {
    laplacian: Laplacian,
    config: PolicyConfig,
    states: Vec<UserState>,
}

impl GraphUcb {
    pub fn new(laplacian: Laplacian, dim: usize, config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate(laplacian.n())?;
        let states = vec![UserState::new(dim, config.lambda); laplacian.n()];
        Ok(Self {
            laplacian,
            config,
            states,
        })
    }

    pub fn states(&self) -> &[UserState] {
        &self.states
    }

    pub fn estimate(&self, j: usize) -> Result<DVector<f64>, PolicyError> {
        check_user(j, self.states.len())?;
        let own = &self.states[j];
        if self.laplacian.degree(j) == 0 {
            return Ok(own.mu_bar().clone());
        }
        let mut pull = own.mu_bar() * self.laplacian.diag(j);
        for (k, l_jk) in self.laplacian.off_diagonal(j) {
            pull.axpy(l_jk, self.states[k].mu_bar(), 1.0);
        }
        Ok(own.mu_bar() - own.factor().solve(&pull) * self.config.lambda)
    }

    /// `b_iᵀμ̂ + β‖b_i‖_{C⁻¹}` for every arm.
    pub fn ucb_scores(&self, j: usize, contexts: &ContextSet) -> Result<Vec<f64>, PolicyError> {
        let mu_hat = self.estimate(j)?;
        let beta = self.config.exploration.for_user(j);
        let factor = self.states[j].factor();
        let means = contexts.scores(&mu_hat);
        Ok((0..contexts.arms())
            .map(|i| {
                let width = if beta == 0.0 { 0.0 } else { beta * factor.inv_norm(&contexts.arm(i)) };
                means[i] + width
            })
            .collect())
    }
}

impl Policy for GraphUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::GraphUcb
    }

    fn select(&mut self, user: usize, contexts: &ContextSet, _rng: &mut SimRng) -> Result<Decision, PolicyError> {
        check_user(user, self.states.len())?;
        check_dim(contexts, self.states[user].dim())?;
        let scores = self.ucb_scores(user, contexts)?;
        Ok(Decision::arm_only(argmax_lowest(&scores)))
    }

    fn update(&mut self, user: usize, contexts: &ContextSet, decision: &Decision, reward: f64) -> Result<(), PolicyError> {
        check_user(user, self.states.len())?;
        self.states[user].update_raw(&contexts.arm(decision.arm), reward)?;
        Ok(())
    }
}

/// Uniform arm.
pub fn random_round<R: Rng + ?Sized>(contexts: &ContextSet, rng: &mut R) -> usize {
    rng.random_range(0..contexts.arms())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn select(&mut self, _user: usize, contexts: &ContextSet, rng: &mut SimRng) -> Result<Decision, PolicyError> {
        Ok(Decision::arm_only(random_round(contexts, rng)))
    }

    fn update(&mut self, _: usize, _: &ContextSet, _: &Decision, _: f64) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Plays the optimal arm using the true parameters.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    mus: DMatrix<f64>,
}

impl OraclePolicy {
    pub fn new(mus: DMatrix<f64>) -> Self {
        Self { mus }
    }
}

impl Policy for OraclePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Oracle
    }

    fn select(&mut self, user: usize, contexts: &ContextSet, _rng: &mut SimRng) -> Result<Decision, PolicyError> {
        check_user(user, self.mus.nrows())?;
        check_dim(contexts, self.mus.ncols())?;
        let mu = self.mus.row(user).transpose();
        Ok(Decision::arm_only(optimal_arm(contexts, &mu)))
    }

    fn update(&mut self, _: usize, _: &ContextSet, _: &Decision, _: f64) -> Result<(), PolicyError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_contexts;
    use crate::graph::{build_random_walk_laplacian, UserGraph};
    use crate::seed::stream;

    fn single_user() -> Laplacian {
        build_random_walk_laplacian(&UserGraph::empty(1)).unwrap()
    }

    #[test]
    fn semi_ts_single_shares_one_state() {
        let mut p = SemiTs::new(Sharing::Single, 3, 2, PolicyConfig::shared(0.1, 1.0, 20)).unwrap();
        let mut rng = stream(1, "s");
        for t in 0..5 {
            let user = (t % 3) as usize;
            let c = sample_contexts(2, 2, t, &mut rng).unwrap();
            let before = p.states()[0].gram().clone();
            let d = p.select(user, &c, &mut rng).unwrap();
            p.update(user, &c, &d, 1.0).unwrap();
            assert_eq!(p.states().len(), 1);
            let x = c.arm(d.arm) - &d.probs.as_ref().unwrap().b_bar;
            if x.norm() > 0.0 {
                assert_ne!(p.states()[0].gram(), &before);
            }
        }
    }

    #[test]
    fn semi_ts_ind_with_one_user_equals_sin() {
        let config = PolicyConfig::shared(0.5, 0.3, 50);
        let mut ind = SemiTs::new(Sharing::Independent, 1, 4, config.clone()).unwrap();
        let mut sin = SemiTs::new(Sharing::Single, 1, 4, config).unwrap();
        let (mut ra, mut rb, mut rc) = (stream(2, "p"), stream(2, "p"), stream(2, "c"));
        for t in 0..100 {
            let c = sample_contexts(4, 4, t, &mut rc).unwrap();
            let da = ind.select(0, &c, &mut ra).unwrap();
            let db = sin.select(0, &c, &mut rb).unwrap();
            assert_eq!(da.arm, db.arm);
            ind.update(0, &c, &da, 0.2).unwrap();
            sin.update(0, &c, &db, 0.2).unwrap();
        }
    }

    #[test]
    fn lin_ts_first_round_is_prior() {
        let lambda = 4.0;
        let p = LinTs::new(Sharing::Independent, 2, 3, PolicyConfig::shared(1.0, lambda, 1)).unwrap();
        let s = &p.states()[1];
        assert_eq!(s.mu_bar().norm(), 0.0);
        let cov = s.gram_inv();
        assert!((cov - DMatrix::<f64>::identity(3, 3) / lambda).norm() < 1e-15);
    }

    #[test]
    fn lin_ts_greedy_at_zero_scale() {
        let mut p = LinTs::new(Sharing::Independent, 1, 2, PolicyConfig::shared(0.0, 1.0, 1)).unwrap();
        let c0 = ContextSet::from_rows(0, &[&[1.0, 0.0]]);
        let d = Decision::arm_only(0);
        p.update(0, &c0, &d, 1.0).unwrap();
        // ridge estimate is (0.5, 0)
        let c = ContextSet::from_rows(1, &[&[0.0, 1.0], &[1.0, 0.0], &[-1.0, 0.0]]);
        let mut rng = stream(3, "g");
        for _ in 0..10 {
            assert_eq!(p.select(0, &c, &mut rng).unwrap().arm, 1);
        }
    }

    #[test]
    fn lin_ts_learns_noiseless_stationary() {
        let mu = DVector::from_vec(vec![0.6, -0.3, 0.5, 0.2, -0.4, 0.1]);
        let mut p = LinTs::new(Sharing::Independent, 1, 6, PolicyConfig::shared(0.01, 1.0, 1)).unwrap();
        let mut rng = stream(4, "l");
        let mut hits = 0;
        let tail = 500;
        for t in 0..2000u64 {
            let c = sample_contexts(3, 6, t, &mut rng).unwrap();
            let d = p.select(0, &c, &mut rng).unwrap();
            if t >= 2000 - tail && d.arm == optimal_arm(&c, &mu) {
                hits += 1;
            }
            let r = c.arm(d.arm).dot(&mu);
            p.update(0, &c, &d, r).unwrap();
        }
        assert!(hits as f64 / tail as f64 > 0.97, "hits {hits}");
    }

    #[test]
    fn graph_ucb_single_node_is_lin_ucb() {
        let beta = 0.7;
        let lambda = 0.5;
        let mut p = GraphUcb::new(single_user(), 4, PolicyConfig::shared(beta, lambda, 1)).unwrap();
        let mut gram = DMatrix::<f64>::identity(4, 4) * lambda;
        let mut moment = DVector::<f64>::zeros(4);
        let mut rng = stream(5, "u");
        for t in 0..50 {
            let c = sample_contexts(2, 4, t, &mut rng).unwrap();
            let inv = gram.clone().try_inverse().unwrap();
            let theta = &inv * &moment;
            let expected: Vec<f64> = (0..2)
                .map(|i| {
                    let b = c.arm(i);
                    b.dot(&theta) + beta * b.dot(&(&inv * &b)).sqrt()
                })
                .collect();
            let got = p.ucb_scores(0, &c).unwrap();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-10);
            }
            let d = p.select(0, &c, &mut rng).unwrap();
            let b = c.arm(d.arm);
            let r = (t as f64).cos();
            gram += &b * b.transpose();
            moment += &b * r;
            p.update(0, &c, &d, r).unwrap();
        }
    }

    #[test]
    fn graph_ucb_zero_width_is_greedy() {
        let lap = build_random_walk_laplacian(&UserGraph::from_edges(2, [(0, 1)]).unwrap()).unwrap();
        let mut p = GraphUcb::new(lap, 2, PolicyConfig::shared(0.0, 1.0, 1)).unwrap();
        let c = ContextSet::from_rows(0, &[&[1.0, 0.0], &[0.0, 1.0]]);
        p.update(0, &c, &Decision::arm_only(1), 1.0).unwrap();
        let mu_hat = p.estimate(0).unwrap();
        let d = p.select(0, &c, &mut stream(0, "x")).unwrap();
        assert_eq!(d.arm, optimal_arm(&c, &mu_hat));
    }

    #[test]
    fn graph_ucb_with_zero_estimates_uses_width() {
        let lap = build_random_walk_laplacian(&UserGraph::from_edges(2, [(0, 1)]).unwrap()).unwrap();
        let p = GraphUcb::new(lap, 2, PolicyConfig::shared(1.0, 1.0, 1)).unwrap();
        assert_eq!(p.estimate(0).unwrap().norm(), 0.0);
        let c = ContextSet::from_rows(0, &[&[0.3, 0.0], &[0.0, 0.8]]);
        let scores = p.ucb_scores(0, &c).unwrap();
        assert!((scores[0] - 0.3).abs() < 1e-15 && (scores[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn random_round_single_arm() {
        let c = ContextSet::from_rows(0, &[&[1.0]]);
        assert_eq!(random_round(&c, &mut stream(0, "r")), 0);
    }

    #[test]
    fn random_round_is_uniform() {
        let c = ContextSet::new(0, DMatrix::identity(5, 5));
        let mut rng = stream(6, "r");
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[random_round(&c, &mut rng)] += 1;
        }
        let p = 0.2;
        let band = 4.0 * (p * (1.0 - p) / draws as f64).sqrt();
        for k in counts {
            assert!((k as f64 / draws as f64 - p).abs() <= band);
        }
        let a: Vec<usize> = (0..20).map(|_| random_round(&c, &mut stream(7, "r"))).collect();
        assert!(a.iter().all(|&x| x == a[0]));
    }

    #[test]
    fn oracle_plays_optimal() {
        let mus = DMatrix::from_row_slice(2, 1, &[0.3, -0.2]);
        let mut p = OraclePolicy::new(mus);
        let c = ContextSet::from_rows(0, &[&[1.0], &[-1.0]]);
        let mut rng = stream(0, "o");
        assert_eq!(p.select(0, &c, &mut rng).unwrap().arm, 0);
        assert_eq!(p.select(1, &c, &mut rng).unwrap().arm, 1);
    }
}
