//! Problem-definition contracts.
//!
//! Arguments are packed as `y = (x, u, p)` and `w = (y, g) = (x, u, p, g)`.
//! Every Jacobian and Hessian block is addressed through the ranges on
//! [`Dims`]. Implementations supply analytic first and second derivatives;
//! [`FiniteDifferenceHessian`] exists for solving only and is refused by the
//! sensitivity assembly.

mod adapters;
mod compose;
pub mod derivcheck;
mod problem;
mod trajectory;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use adapters::{FiniteDifferenceHessian, ScaledComponent, ScaledFunctions, ScaledQoi, TimeNormalized};
pub use compose::{composed_gradient, composed_hessian, composed_jacobian, mixed_g_block, ComponentEval};
pub use problem::{eval_composed_dynamics, Bounds, Horizon, OcpProblem};
pub use trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("non-finite model output at t = {t}, y = {y:?}")]
    ModelEvaluation { t: f64, y: Vec<f64> },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("time {t} outside horizon [{t0}, {tf}]")]
    OutsideHorizon { t: f64, t0: f64, tf: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

/// Problem dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_p: usize,
    pub n_g: usize,
}

impl Dims {
    pub fn new(n_x: usize, n_u: usize, n_p: usize, n_g: usize) -> Result<Self, OcpError> {
        if n_x == 0 {
            return Err(OcpError::InvalidProblem("state dimension must be at least 1".into()));
        }
        if n_g == 0 {
            return Err(OcpError::InvalidProblem(
                "component function must have at least one output".into(),
            ));
        }
        Ok(Self { n_x, n_u, n_p, n_g })
    }

    pub fn n_y(&self) -> usize {
        self.n_x + self.n_u + self.n_p
    }

    pub fn n_w(&self) -> usize {
        self.n_y() + self.n_g
    }

    pub fn x_range(&self) -> Range<usize> {
        0..self.n_x
    }

    pub fn u_range(&self) -> Range<usize> {
        self.n_x..self.n_x + self.n_u
    }

    pub fn p_range(&self) -> Range<usize> {
        self.n_x + self.n_u..self.n_y()
    }

    /// Position of `g` inside the packed `w`.
    pub fn g_range(&self) -> Range<usize> {
        self.n_y()..self.n_w()
    }

    /// Pack `(x, u, p)` into `y`.
    pub fn pack_y(&self, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_x);
        debug_assert_eq!(u.len(), self.n_u);
        debug_assert_eq!(p.len(), self.n_p);
        let mut y = Vec::with_capacity(self.n_y());
        y.extend_from_slice(x);
        y.extend_from_slice(u);
        y.extend_from_slice(p);
        y
    }
}

/// How second derivatives of a model are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// The perturbable model `g(t, y)`.
///
/// `hessians` returns one symmetric `n_y × n_y` matrix per output component.
/// Implementations must be reentrant.
pub trait ComponentFunction: Send + Sync {
    fn n_g(&self) -> usize;
    fn n_y(&self) -> usize;
    fn value(&self, t: f64, y: &[f64]) -> DVector<f64>;
    /// `n_g × n_y`, columns ordered as `(x, u, p)`.
    fn jacobian(&self, t: f64, y: &[f64]) -> DMatrix<f64>;
    fn hessians(&self, t: f64, y: &[f64]) -> Vec<DMatrix<f64>>;
}

/// Dynamics, running cost and Mayer term of a Bolza problem.
///
/// All derivatives are taken with respect to `w = (x, u, p, g)`, treating `g`
/// as an independent argument; composition with the component function is
/// done by the callers through [`composed_jacobian`] and friends.
pub trait ProblemFunctions: Send + Sync {
    fn dims(&self) -> Dims;

    fn dynamics(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64>;
    /// `n_x × n_w`.
    fn dynamics_jacobian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64>;
    /// `Σ_i weights[i] ∇²_ww f_i`, `n_w × n_w`.
    fn dynamics_hessian(&self, t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64>;

    fn running_cost(&self, _t: f64, _y: &[f64], _g: &[f64]) -> f64 {
        0.0
    }
    fn running_cost_gradient(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dims().n_w())
    }
    fn running_cost_hessian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        let n = self.dims().n_w();
        DMatrix::zeros(n, n)
    }

    fn terminal_cost(&self, _xf: &[f64], _p: &[f64]) -> f64 {
        0.0
    }
    /// Gradient with respect to `(x_f, p)`.
    fn terminal_cost_gradient(&self, _xf: &[f64], _p: &[f64]) -> DVector<f64> {
        let d = self.dims();
        DVector::zeros(d.n_x + d.n_p)
    }
    fn terminal_cost_hessian(&self, _xf: &[f64], _p: &[f64]) -> DMatrix<f64> {
        let d = self.dims();
        DMatrix::zeros(d.n_x + d.n_p, d.n_x + d.n_p)
    }

    fn second_derivatives(&self) -> DerivativeSource {
        DerivativeSource::Analytic
    }
}

/// A quantity of interest in Bolza form, `φ̂(x(t_f), p) + ∫ ℓ̂(t, y, g) dt`.
pub trait Qoi: Send + Sync {
    fn terminal(&self, xf: &[f64], p: &[f64]) -> f64;
    /// Gradient with respect to `(x_f, p)`.
    fn terminal_gradient(&self, xf: &[f64], p: &[f64]) -> DVector<f64>;

    fn running(&self, _t: f64, _y: &[f64], _g: &[f64]) -> f64 {
        0.0
    }
    /// Gradient with respect to `w`, or `None` when there is no integral term.
    fn running_gradient(&self, _t: f64, _y: &[f64], _g: &[f64]) -> Option<DVector<f64>> {
        None
    }
}

/// `φ̂ = x_i(t_f)`.
#[derive(Debug, Clone, Copy)]
pub struct FinalStateComponent {
    pub index: usize,
    pub n_x: usize,
    pub n_p: usize,
}

impl Qoi for FinalStateComponent {
    fn terminal(&self, xf: &[f64], _p: &[f64]) -> f64 {
        xf[self.index]
    }

    fn terminal_gradient(&self, _xf: &[f64], _p: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_x + self.n_p);
        g[self.index] = 1.0;
        g
    }
}

/// A quantity of interest that is identically zero.
#[derive(Debug, Clone, Copy)]
pub struct ZeroQoi {
    pub n_x: usize,
    pub n_p: usize,
}

impl Qoi for ZeroQoi {
    fn terminal(&self, _xf: &[f64], _p: &[f64]) -> f64 {
        0.0
    }

    fn terminal_gradient(&self, _xf: &[f64], _p: &[f64]) -> DVector<f64> {
        DVector::zeros(self.n_x + self.n_p)
    }
}
