use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::environment::ContextSet;
use crate::linalg::{LinalgError, SpdFactor};

/// Per-user sufficient statistics: regularized Gram matrix `B`, moment
/// vector `y`, and the unadjusted estimate `μ̄ = B⁻¹y`.
///
/// `B` is refactored after every update; its inverse is cached because
/// neighbors read it when building their exploration Gram matrix.
#[derive(Debug, Clone)]
pub struct UserState {
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    mu_bar: DVector<f64>,
    factor: SpdFactor,
    gram_inv: DMatrix<f64>,
    ridge: f64,
}

impl UserState {
    /// `B = ridge·I`, `y = 0`.
    pub fn new(dim: usize, ridge: f64) -> Self {
        assert!(ridge > 0.0, "ridge must be positive, got {ridge}");
        let gram = DMatrix::<f64>::identity(dim, dim) * ridge;
        let factor = SpdFactor::new(&gram).expect("ridge·I is positive definite");
        let gram_inv = factor.inverse();
        Self {
            gram,
            moment: DVector::zeros(dim),
            mu_bar: DVector::zeros(dim),
            factor,
            gram_inv,
            ridge,
        }
    }

    /// State with an explicit Gram matrix and moment vector. `ridge` is the
    /// floor `B ⪰ ridge·I` the caller guarantees.
    pub fn from_parts(
        gram: DMatrix<f64>,
        moment: DVector<f64>,
        ridge: f64,
    ) -> Result<Self, LinalgError> {
        let dim = moment.len();
        let mut state = Self::new(dim, ridge);
        state.gram = gram;
        state.moment = moment;
        state.refresh()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn mu_bar(&self) -> &DVector<f64> {
        &self.mu_bar
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Centered update. With `b̄ = Σ π̂_i b_i` and `X = b_a − b̄`:
    /// `B += XXᵀ + Σ π̂_i (b_i − b̄)(b_i − b̄)ᵀ`, `y += 2·X·r`.
    /// Returns `X`.
    pub fn update(
        &mut self,
        contexts: &ContextSet,
        probs: &ArmProbs,
        arm: usize,
        reward: f64,
    ) -> Result<DVector<f64>, LinalgError> {
        let x = contexts.arm(arm) - &probs.b_bar;
        self.gram.ger(1.0, &x, &x, 1.0);
        for (i, &p) in probs.pi_hat.iter().enumerate() {
            if p > 0.0 {
                let c = contexts.arm(i) - &probs.b_bar;
                self.gram.ger(p, &c, &c, 1.0);
            }
        }
        self.moment.axpy(2.0 * reward, &x, 1.0);
        self.refresh()?;
        Ok(x)
    }

    /// Uncentered ridge update: `B += bbᵀ`, `y += b·r`.
    pub fn update_raw(&mut self, context: &DVector<f64>, reward: f64) -> Result<(), LinalgError> {
        self.gram.ger(1.0, context, context, 1.0);
        self.moment.axpy(reward, context, 1.0);
        self.refresh()
    }

    fn refresh(&mut self) -> Result<(), LinalgError> {
        // rank-one sums of outer products are symmetric only up to rounding
        let t = self.gram.transpose();
        self.gram = (&self.gram + t) * 0.5;
        self.factor = SpdFactor::new(&self.gram)?;
        self.mu_bar = self.factor.solve(&self.moment);
        self.gram_inv = self.factor.inverse();
        Ok(())
    }
}

/// Arm-selection probabilities for one round and the implied mean context.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmProbs {
    pub pi_hat: Vec<f64>,
    /// `Σ_i π̂_i b_i`.
    pub b_bar: DVector<f64>,
    /// Monte Carlo draws behind `pi_hat`; 0 when the probabilities are exact.
    pub samples: usize,
}

impl ArmProbs {
    pub fn new(pi_hat: Vec<f64>, contexts: &ContextSet, samples: usize) -> Self {
        assert_eq!(pi_hat.len(), contexts.arms(), "one probability per arm");
        let weights = DVector::from_column_slice(&pi_hat);
        let b_bar = contexts.matrix().tr_mul(&weights);
        Self {
            pi_hat,
            b_bar,
            samples,
        }
    }

    /// Empirical frequencies `count_i / M`.
    pub fn from_counts(counts: &[u64], contexts: &ContextSet) -> Self {
        let m: u64 = counts.iter().sum();
        assert!(m > 0, "at least one draw");
        let pi_hat = counts.iter().map(|&c| c as f64 / m as f64).collect();
        Self::new(pi_hat, contexts, m as usize)
    }

    pub fn uniform(contexts: &ContextSet) -> Self {
        let n = contexts.arms();
        Self::new(vec![1.0 / n as f64; n], contexts, 0)
    }

    /// All mass on one arm.
    pub fn point_mass(contexts: &ContextSet, arm: usize) -> Self {
        let mut pi = vec![0.0; contexts.arms()];
        pi[arm] = 1.0;
        Self::new(pi, contexts, 0)
    }

    /// Draws an arm from `Multinom(π̂)`; zero-probability arms are never drawn.
    pub fn sample_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.pi_hat.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
        last_positive
    }
}
