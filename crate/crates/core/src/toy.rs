//! Small problems with closed-form solutions, used as test oracles and by
//! the self-check command.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ocp::{ComponentFunction, Dims, FinalStateComponent, Horizon, OcpError, OcpProblem, ProblemFunctions};

/// A component function that does not depend on `y`.
#[derive(Debug, Clone)]
pub struct ConstantComponent {
    pub values: Vec<f64>,
    pub n_y: usize,
}

impl ComponentFunction for ConstantComponent {
    fn n_g(&self) -> usize {
        self.values.len()
    }

    fn n_y(&self) -> usize {
        self.n_y
    }

    fn value(&self, _t: f64, _y: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    fn jacobian(&self, _t: f64, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.values.len(), self.n_y)
    }

    fn hessians(&self, _t: f64, _y: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.n_y, self.n_y); self.values.len()]
    }
}

/// Scalar functions of the first state entry, `g_i(y) = h_i(x_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMap {
    Identity,
    Square,
    Sine,
}

impl ScalarMap {
    fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            ScalarMap::Identity => (x, 1.0, 0.0),
            ScalarMap::Square => (x * x, 2.0 * x, 2.0),
            ScalarMap::Sine => (x.sin(), x.cos(), -x.sin()),
        }
    }
}

/// `g(y) = (h_1(x_0), …, h_m(x_0))`.
#[derive(Debug, Clone)]
pub struct StateMapComponent {
    pub maps: Vec<ScalarMap>,
    pub n_y: usize,
}

impl ComponentFunction for StateMapComponent {
    fn n_g(&self) -> usize {
        self.maps.len()
    }

    fn n_y(&self) -> usize {
        self.n_y
    }

    fn value(&self, _t: f64, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.maps.len(), self.maps.iter().map(|m| m.eval(y[0]).0))
    }

    fn jacobian(&self, _t: f64, y: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.maps.len(), self.n_y);
        for (i, m) in self.maps.iter().enumerate() {
            j[(i, 0)] = m.eval(y[0]).1;
        }
        j
    }

    fn hessians(&self, _t: f64, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.maps
            .iter()
            .map(|m| {
                let mut h = DMatrix::zeros(self.n_y, self.n_y);
                h[(0, 0)] = m.eval(y[0]).2;
                h
            })
            .collect()
    }
}

/// One-state problem
///
/// ```text
/// x' = a x + Σ c_i g_i + u        (u present when `control` is set)
/// l  = (q x² + r u²) / 2
/// φ  = s (x_f − x_target)² / 2
/// ```
#[derive(Debug, Clone)]
pub struct ScalarToy {
    pub a: f64,
    pub g_weights: Vec<f64>,
    pub control: bool,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub x_target: f64,
}

impl ScalarToy {
    fn n_u(&self) -> usize {
        usize::from(self.control)
    }
}

impl ProblemFunctions for ScalarToy {
    fn dims(&self) -> Dims {
        Dims { n_x: 1, n_u: self.n_u(), n_p: 0, n_g: self.g_weights.len() }
    }

    fn dynamics(&self, _t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        let mut v = self.a * y[0] + self.g_weights.iter().zip(g).map(|(c, gi)| c * gi).sum::<f64>();
        if self.control {
            v += y[1];
        }
        DVector::from_element(1, v)
    }

    fn dynamics_jacobian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        let d = self.dims();
        let mut j = DMatrix::zeros(1, d.n_w());
        j[(0, 0)] = self.a;
        if self.control {
            j[(0, 1)] = 1.0;
        }
        for (i, c) in self.g_weights.iter().enumerate() {
            j[(0, d.n_y() + i)] = *c;
        }
        j
    }

    fn dynamics_hessian(&self, _t: f64, _y: &[f64], _g: &[f64], _w: &[f64]) -> DMatrix<f64> {
        let n = self.dims().n_w();
        DMatrix::zeros(n, n)
    }

    fn running_cost(&self, _t: f64, y: &[f64], _g: &[f64]) -> f64 {
        let u2 = if self.control { y[1] * y[1] } else { 0.0 };
        0.5 * (self.q * y[0] * y[0] + self.r * u2)
    }

    fn running_cost_gradient(&self, _t: f64, y: &[f64], _g: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.dims().n_w());
        v[0] = self.q * y[0];
        if self.control {
            v[1] = self.r * y[1];
        }
        v
    }

    fn running_cost_hessian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        let n = self.dims().n_w();
        let mut h = DMatrix::zeros(n, n);
        h[(0, 0)] = self.q;
        if self.control {
            h[(1, 1)] = self.r;
        }
        h
    }

    fn terminal_cost(&self, xf: &[f64], _p: &[f64]) -> f64 {
        0.5 * self.s * (xf[0] - self.x_target).powi(2)
    }

    fn terminal_cost_gradient(&self, xf: &[f64], _p: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.s * (xf[0] - self.x_target))
    }

    fn terminal_cost_hessian(&self, _xf: &[f64], _p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.s)
    }
}

/// `x_1' = x_2, x_2' = u + 0·g`, `l = u²`,
/// `φ = ρ/2 ((x_1(1) − 1)² + x_2(1)²)`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    pub rho: f64,
}

impl ProblemFunctions for DoubleIntegrator {
    fn dims(&self) -> Dims {
        Dims { n_x: 2, n_u: 1, n_p: 0, n_g: 1 }
    }

    fn dynamics(&self, _t: f64, y: &[f64], _g: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![y[1], y[2]])
    }

    fn dynamics_jacobian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    fn dynamics_hessian(&self, _t: f64, _y: &[f64], _g: &[f64], _w: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(4, 4)
    }

    fn running_cost(&self, _t: f64, y: &[f64], _g: &[f64]) -> f64 {
        y[2] * y[2]
    }

    fn running_cost_gradient(&self, _t: f64, y: &[f64], _g: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, 2.0 * y[2], 0.0])
    }

    fn running_cost_hessian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(4, 4);
        h[(2, 2)] = 2.0;
        h
    }

    fn terminal_cost(&self, xf: &[f64], _p: &[f64]) -> f64 {
        0.5 * self.rho * ((xf[0] - 1.0).powi(2) + xf[1].powi(2))
    }

    fn terminal_cost_gradient(&self, xf: &[f64], _p: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![self.rho * (xf[0] - 1.0), self.rho * xf[1]])
    }

    fn terminal_cost_hessian(&self, _xf: &[f64], _p: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.rho
    }
}

fn unit_horizon() -> Horizon {
    Horizon::Fixed { t0: 0.0, tf: 1.0 }
}

/// `x' = g(x) = x`, `x(0) = 1` on `[0, 1]`; solution `eᵗ`.
pub fn exponential_growth() -> Result<OcpProblem, OcpError> {
    let funcs = ScalarToy { a: 0.0, g_weights: vec![1.0], control: false, q: 0.0, r: 0.0, s: 0.0, x_target: 0.0 };
    let g = StateMapComponent { maps: vec![ScalarMap::Identity], n_y: 1 };
    OcpProblem::new(unit_horizon(), vec![1.0], Arc::new(funcs), Arc::new(g))
}

/// `x' = 0`, `l = u²`: optimal control zero, objective zero.
pub fn control_energy_only() -> Result<OcpProblem, OcpError> {
    let funcs = ScalarToy { a: 0.0, g_weights: vec![0.0], control: true, q: 0.0, r: 2.0, s: 0.0, x_target: 0.0 };
    let g = ConstantComponent { values: vec![0.0], n_y: 2 };
    OcpProblem::new(unit_horizon(), vec![0.3], Arc::new(funcs), Arc::new(g))
}

/// `x' = u + g_0`, `l = (x² + u²)/2` on `[0, 1]` with constant `g_0` and the
/// QoI `x(1)`. For a constant perturbation `δg_0` the sensitivities are
/// `δx = δg_0 sinh t / cosh 1`, `δλ = δg_0 (1 − cosh t / cosh 1)`; the adjoint
/// of the QoI is `δ̃x = −sinh t / cosh 1`, `δ̃λ = cosh t / cosh 1`.
pub fn linear_quadratic(x0: f64, g0: f64) -> Result<OcpProblem, OcpError> {
    let funcs = ScalarToy { a: 0.0, g_weights: vec![1.0], control: true, q: 1.0, r: 1.0, s: 0.0, x_target: 0.0 };
    let g = ConstantComponent { values: vec![g0], n_y: 2 };
    Ok(OcpProblem::new(unit_horizon(), vec![x0], Arc::new(funcs), Arc::new(g))?
        .with_qoi(Arc::new(FinalStateComponent { index: 0, n_x: 1, n_p: 0 })))
}

/// `x' = g(x) + u` with `g(x) = x²`, `l = u²`, on `[0, 1]`.
pub fn squared_state() -> Result<OcpProblem, OcpError> {
    let funcs = ScalarToy { a: 0.0, g_weights: vec![1.0], control: true, q: 0.0, r: 2.0, s: 1.0, x_target: 0.0 };
    let g = StateMapComponent { maps: vec![ScalarMap::Square], n_y: 2 };
    Ok(OcpProblem::new(unit_horizon(), vec![0.5], Arc::new(funcs), Arc::new(g))?
        .with_qoi(Arc::new(FinalStateComponent { index: 0, n_x: 1, n_p: 0 })))
}

/// `x' = g_1 + g_2/2 + u` with `g = (x², sin x)`, `l = x² + u²`; two
/// component outputs on a scalar state, for exhaustive sign enumeration.
pub fn two_output() -> Result<OcpProblem, OcpError> {
    let funcs = ScalarToy { a: 0.0, g_weights: vec![1.0, 0.5], control: true, q: 2.0, r: 2.0, s: 0.0, x_target: 0.0 };
    let g = StateMapComponent { maps: vec![ScalarMap::Square, ScalarMap::Sine], n_y: 2 };
    Ok(OcpProblem::new(unit_horizon(), vec![0.4], Arc::new(funcs), Arc::new(g))?
        .with_qoi(Arc::new(FinalStateComponent { index: 0, n_x: 1, n_p: 0 })))
}

/// Double integrator from rest steered towards `(1, 0)` by a terminal penalty.
pub fn double_integrator(rho: f64) -> Result<OcpProblem, OcpError> {
    let g = ConstantComponent { values: vec![0.0], n_y: 3 };
    OcpProblem::new(unit_horizon(), vec![0.0, 0.0], Arc::new(DoubleIntegrator { rho }), Arc::new(g))
}
