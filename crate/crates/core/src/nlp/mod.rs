//! Equality-constrained nonlinear programming with variable bounds.
//!
//! The solver is a primal-dual interior point method: bounds are handled by
//! a logarithmic barrier, the Newton step comes from the full KKT system
//! factored by a sparse symmetric indefinite (Bunch-Kaufman) factorization,
//! and globalization is a backtracking filter line search with second-order
//! corrections.
//!
//! Sign convention: the Lagrangian is `f(z) + yᵀ c(z) − z_Lᵀ(z − l) − z_Uᵀ(u − z)`
//! so that stationarity reads `∇f + Jᵀ y − z_L + z_U = 0` with `z_L, z_U ≥ 0`.

mod ipm;
mod ldl;
mod sparse;

use nalgebra::DVector;
use thiserror::Error;

pub use ipm::{solve, NlpSolution, SolveStatus, SolverConfig, StepRecord};
pub use ldl::{Inertia, SymmetricFactorization};
pub use sparse::{solve_kkt_linear, SymmetricSparse, Triplets};

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("KKT matrix singular after maximal regularization ({0})")]
    SingularKkt(String),
    #[error("matrix is singular: zero pivot at row {row}")]
    SingularMatrix { row: usize },
    #[error("linear solve residual {residual:e} exceeds {tolerance:e}")]
    InaccurateSolve { residual: f64, tolerance: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// A smooth NLP `min f(z) s.t. c(z) = 0, l ≤ z ≤ u`.
///
/// Sparse derivatives are returned as triplets whose pattern (the sequence of
/// `(row, col)` pairs) must not change between calls. Duplicate entries are
/// summed. The Hessian returns the lower triangle only.
pub trait NlpProblem: Sync {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn objective(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> DVector<f64>;
    fn constraints(&self, z: &[f64]) -> DVector<f64>;
    fn jacobian(&self, z: &[f64]) -> Triplets;
    /// Lower triangle of `obj_factor ∇²f + Σ_i y_i ∇²c_i`.
    fn hessian(&self, z: &[f64], obj_factor: f64, y: &[f64]) -> Triplets;
}
