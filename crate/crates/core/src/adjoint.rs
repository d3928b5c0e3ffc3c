//! Adjoint-based QoI error estimates and worst-case bounds.
//!
//! The adjoint system uses the same KKT matrix as the forward sensitivity
//! with right-hand side taken from the QoI, so one factorization serves every
//! perturbation. The QoI derivative in a direction `δg` is then a weighted
//! node sum that is linear in `(δg, δg_y)`, which gives a closed-form
//! worst case over componentwise error bands.

use nalgebra::{DMatrix, DVector};

use crate::sensitivity::{LqData, LqSolution, PerturbationData, SensitivityError};
use crate::ocp::Qoi;

pub type AdjointSolution = LqSolution;

/// Solve the adjoint system of `qoi` around the base solution in `lq`.
pub fn solve_adjoint_system(lq: &LqData, qoi: &dyn Qoi) -> Result<AdjointSolution, SensitivityError> {
    let d = lq.dims();
    let mut c = Vec::with_capacity(lq.num_nodes());
    for k in 0..lq.num_nodes() {
        c.push(lq.qoi_running_gradients(qoi, k).map(|(gy, _)| gy).unwrap_or_else(|| DVector::zeros(d.n_y())));
    }
    let sigma = qoi.terminal_gradient(&lq.x_final, &lq.p);
    let r = vec![DVector::zeros(d.n_x); lq.num_nodes()];
    lq.solve_linear_terms(&c, &sigma, &r)
}

/// Per-node coefficients of the QoI derivative:
/// `q' = Σ_k W_k [a_kᵀ δg_k + d_kᵀ δg_y,k δ̃y_k]`.
#[derive(Debug, Clone)]
pub struct AdjointCoefficients {
    pub weight: Vec<f64>,
    /// `a_k = H_gy δ̃y + f_gᵀ δ̃λ + ∇_g ℓ`.
    pub a: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
}

pub fn adjoint_coefficients(lq: &LqData, adj: &AdjointSolution, qoi: &dyn Qoi) -> AdjointCoefficients {
    let mut out = AdjointCoefficients { weight: vec![], a: vec![], d: vec![], dy: vec![] };
    for (k, nb) in lq.nodes.iter().enumerate() {
        let dy = adj.dy(k);
        let dl = DVector::from_column_slice(&adj.dlambda[k]);
        let mut a = nb.h_yg.tr_mul(&dy) + nb.f_g.tr_mul(&dl);
        if let Some((_, gg)) = lq.qoi_running_gradients(qoi, k) {
            a += gg;
        }
        out.weight.push(nb.weight);
        out.a.push(a);
        out.d.push(nb.d.clone());
        out.dy.push(dy);
    }
    out
}

/// QoI derivative in direction `pert`, computed from the adjoint.
pub fn qoi_directional_derivative(
    lq: &LqData,
    adj: &AdjointSolution,
    pert: &PerturbationData,
    qoi: &dyn Qoi,
) -> Result<f64, SensitivityError> {
    pert.check(lq)?;
    let co = adjoint_coefficients(lq, adj, qoi);
    Ok(directional_from_coefficients(&co, pert))
}

pub fn directional_from_coefficients(co: &AdjointCoefficients, pert: &PerturbationData) -> f64 {
    (0..co.weight.len())
        .map(|k| co.weight[k] * (co.a[k].dot(&pert.dg[k]) + co.d[k].dot(&(&pert.dg_y[k] * &co.dy[k]))))
        .sum()
}

/// Estimated QoI error `|q'(δg)|` for `δg = ĝ − g*`.
pub fn qoi_error_estimate(
    lq: &LqData,
    adj: &AdjointSolution,
    pert: &PerturbationData,
    qoi: &dyn Qoi,
) -> Result<f64, SensitivityError> {
    qoi_directional_derivative(lq, adj, pert, qoi).map(f64::abs)
}

/// Componentwise error bands on `δg` and `δg_y` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBands {
    pub eps: Vec<DVector<f64>>,
    /// Bands on `[δg_x, δg_u, δg_p]`, `n_g × n_y` per node.
    pub eps_y: Vec<DMatrix<f64>>,
}

impl ErrorBands {
    /// Tightest bands containing the given perturbation.
    pub fn from_perturbation(pert: &PerturbationData) -> Self {
        Self { eps: pert.dg.iter().map(|v| v.abs()).collect(), eps_y: pert.dg_y.iter().map(|m| m.abs()).collect() }
    }

    pub fn is_valid(&self) -> bool {
        self.eps.len() == self.eps_y.len()
            && self.eps.iter().flatten().chain(self.eps_y.iter().flatten()).all(|v| *v >= 0.0 && v.is_finite())
    }
}

/// Maximizing perturbation of the linearized QoI error over the bands.
#[derive(Debug, Clone, PartialEq)]
pub struct LpWorstCase {
    pub perturbation: PerturbationData,
    pub objective: f64,
}

fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn closed_form(co: &AdjointCoefficients, bands: &ErrorBands) -> (PerturbationData, f64) {
    let mut dg = Vec::with_capacity(co.weight.len());
    let mut dg_y = Vec::with_capacity(co.weight.len());
    let mut total = 0.0;
    for k in 0..co.weight.len() {
        let (a, d, dy) = (&co.a[k], &co.d[k], &co.dy[k]);
        let e = &bands.eps[k];
        let ey = &bands.eps_y[k];
        let mut node = 0.0;
        let mut v = DVector::zeros(a.len());
        for i in 0..a.len() {
            node += a[i].abs() * e[i];
            v[i] = sgn(a[i]) * e[i];
        }
        let mut m = DMatrix::zeros(ey.nrows(), ey.ncols());
        for i in 0..ey.nrows() {
            for j in 0..ey.ncols() {
                let c = d[i] * dy[j];
                node += c.abs() * ey[(i, j)];
                m[(i, j)] = sgn(c) * ey[(i, j)];
            }
        }
        total += co.weight[k] * node;
        dg.push(v);
        dg_y.push(m);
    }
    (PerturbationData { dg, dg_y }, total)
}

fn check_bands(lq: &LqData, bands: &ErrorBands) -> Result<(), SensitivityError> {
    let d = lq.dims();
    let ok = bands.eps.len() == lq.num_nodes()
        && bands.eps_y.len() == lq.num_nodes()
        && bands.eps.iter().all(|v| v.len() == d.n_g)
        && bands.eps_y.iter().all(|m| m.nrows() == d.n_g && m.ncols() == d.n_y());
    if !ok {
        return Err(SensitivityError::GridMismatch { expected: lq.num_nodes(), got: bands.eps.len() });
    }
    Ok(())
}

/// Worst-case perturbation within `bands` and its linearized QoI error.
pub fn lp_worst_case(
    lq: &LqData,
    adj: &AdjointSolution,
    bands: &ErrorBands,
    qoi: &dyn Qoi,
) -> Result<LpWorstCase, SensitivityError> {
    check_bands(lq, bands)?;
    let (perturbation, objective) = closed_form(&adjoint_coefficients(lq, adj, qoi), bands);
    Ok(LpWorstCase { perturbation, objective })
}

/// Upper bound on the linearized QoI error over all perturbations in `bands`.
pub fn qoi_error_bound(
    lq: &LqData,
    adj: &AdjointSolution,
    bands: &ErrorBands,
    qoi: &dyn Qoi,
) -> Result<f64, SensitivityError> {
    check_bands(lq, bands)?;
    Ok(closed_form(&adjoint_coefficients(lq, adj, qoi), bands).1)
}
