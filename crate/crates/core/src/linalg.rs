//! Symmetric positive-definite factorizations shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Diagonal jitter added when a Gram matrix fails to factor.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (dimension {dim}), even after jitter")]
    NotPositiveDefinite { dim: usize },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
}

impl SpdFactor {
    /// Factors `m`. A failed attempt is retried once with `JITTER·I` added.
    pub fn new(m: &DMatrix<f64>) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Ok(Self {
                chol,
                jittered: false,
            });
        }
        let dim = m.nrows();
        let shifted = m + DMatrix::<f64>::identity(dim, dim) * JITTER;
        match Cholesky::new(shifted) {
            Some(chol) => {
                log::warn!("near-singular {dim}x{dim} Gram matrix; factored with {JITTER:e} jitter");
                Ok(Self {
                    chol,
                    jittered: true,
                })
            }
            None => Err(LinalgError::NotPositiveDefinite { dim }),
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Lower-triangular factor.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        symmetrize(inv)
    }

    /// `L⁻¹ x`, so that `‖L⁻¹x‖² = xᵀA⁻¹x`.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        l.solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `‖x‖_{A⁻¹} = sqrt(xᵀ A⁻¹ x)`.
    pub fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        self.whiten(x).norm()
    }

    /// `L⁻ᵀ z`: maps a standard normal draw `z` to a draw with covariance `A⁻¹`.
    pub fn color_inverse(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        l.tr_solve_lower_triangular(z)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `(L⁻¹ Mᵀ)ᵀ` for a row-major set of vectors `M` (one vector per row).
    /// Row `i` of the result is `L⁻ᵀ`-transformed so that
    /// `rows · (L⁻ᵀ z) = result · z`.
    pub fn rows_times_color_inverse(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.chol.l_dirty();
        let solved = l
            .solve_lower_triangular(&m.transpose())
            .expect("Cholesky factor has a positive diagonal");
        solved.transpose()
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
