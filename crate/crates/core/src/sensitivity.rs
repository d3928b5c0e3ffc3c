//! Sensitivity of a solved problem with respect to perturbations of `g`.
//!
//! At a converged collocation solution the Hamiltonian `H = l + λᵀ f` is
//! differentiated through the component function to give, at every node,
//! the blocks `H_yy`, `H_yg`, the linearized dynamics `A, B, C, F = f_g` and
//! `d = ∇_g H`. These define a linear-quadratic problem on the same grid
//! whose KKT matrix is the Lagrangian Hessian / constraint Jacobian of the
//! collocation NLP with the initial state eliminated. The forward
//! sensitivity system and the adjoint system of a quantity of interest share
//! that matrix and differ only in their right-hand sides.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::collocation::{CollocationSolution, Transcription};
use crate::nlp::{Inertia, NlpError, SymmetricFactorization, SymmetricSparse, Triplets};
use crate::ocp::{
    composed_gradient, composed_hessian, composed_jacobian, mixed_g_block, ComponentEval, ComponentFunction,
    DerivativeSource, Dims, Qoi,
};

/// Bound multipliers above this mark a bound as active.
pub const ACTIVE_BOUND_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("base solution did not converge")]
    NotConverged,
    #[error("bound is active at the base solution: {bound} (multiplier {multiplier:e})")]
    ActiveBound { bound: String, multiplier: f64 },
    #[error("second derivatives are finite-difference approximations; analytic ones are required")]
    FiniteDifferenceDerivatives,
    #[error("non-finite {what} at node {node}")]
    NonFinite { what: &'static str, node: usize },
    #[error("second-order sufficient condition violated: KKT inertia {found:?}, expected {expected:?}")]
    SsocViolation { found: Inertia, expected: Inertia },
    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("no quantity of interest is attached to the problem")]
    MissingQoi,
    #[error(transparent)]
    Linear(#[from] NlpError),
}

/// Linearization data at one collocation node.
#[derive(Debug, Clone)]
pub struct NodeBlocks {
    pub t: f64,
    /// Quadrature weight `W_k` in problem time.
    pub weight: f64,
    /// Defect scaling `h_k` (half interval length in problem time).
    pub defect_scale: f64,
    /// Reference LGR weight of the node (`W_k = h_k · local_weight`).
    pub local_weight: f64,
    pub y: Vec<f64>,
    pub g: DVector<f64>,
    pub g_y: DMatrix<f64>,
    pub lambda: DVector<f64>,
    /// `f_y + f_g g_y`, `n_x × n_y`; its column blocks are `A`, `B`, `C`.
    pub f_y: DMatrix<f64>,
    /// `f_g`, `n_x × n_g`.
    pub f_g: DMatrix<f64>,
    /// Full second derivative of `H` in `y`, `n_y × n_y`.
    pub h_yy: DMatrix<f64>,
    /// `∇²_yg H + g_yᵀ ∇²_gg H`, `n_y × n_g`.
    pub h_yg: DMatrix<f64>,
    /// `∇_g H = f_gᵀ λ + ∇_g l`.
    pub d: DVector<f64>,
}

impl NodeBlocks {
    fn block(&self, m: &DMatrix<f64>, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> DMatrix<f64> {
        m.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }
}

/// Hamiltonian blocks and linearized dynamics along a solved trajectory.
pub struct LqData {
    pub transcription: Transcription,
    pub nodes: Vec<NodeBlocks>,
    /// Hessian of the Mayer term in `(x_f, p)`.
    pub terminal_hessian: DMatrix<f64>,
    pub x_final: Vec<f64>,
    pub p: Vec<f64>,
    kkt: OnceLock<Result<LqKkt, String>>,
}

impl std::fmt::Debug for LqData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LqData").field("nodes", &self.nodes.len()).field("dims", &self.dims()).finish()
    }
}

struct LqKkt {
    matrix: SymmetricSparse,
    fact: SymmetricFactorization,
    n_v: usize,
}

macro_rules! block_accessor {
    ($name:ident, $field:ident, $r:ident, $c:ident) => {
        pub fn $name(&self, k: usize) -> DMatrix<f64> {
            let d = self.dims();
            let n = &self.nodes[k];
            n.block(&n.$field, d.$r(), d.$c())
        }
    };
}

impl LqData {
    pub fn dims(&self) -> Dims {
        self.transcription.layout.dims
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    block_accessor!(h_xx, h_yy, x_range, x_range);
    block_accessor!(h_xu, h_yy, x_range, u_range);
    block_accessor!(h_xp, h_yy, x_range, p_range);
    block_accessor!(h_uu, h_yy, u_range, u_range);
    block_accessor!(h_up, h_yy, u_range, p_range);
    block_accessor!(h_pp, h_yy, p_range, p_range);
    block_accessor!(a, f_y, x_range, x_range);
    block_accessor!(b, f_y, x_range, u_range);
    block_accessor!(c, f_y, x_range, p_range);

    pub fn h_xg(&self, k: usize) -> DMatrix<f64> {
        let d = self.dims();
        self.nodes[k].h_yg.rows(0, d.n_x).into_owned()
    }

    pub fn h_ug(&self, k: usize) -> DMatrix<f64> {
        let d = self.dims();
        self.nodes[k].h_yg.rows(d.n_x, d.n_u).into_owned()
    }

    pub fn h_pg(&self, k: usize) -> DMatrix<f64> {
        let d = self.dims();
        self.nodes[k].h_yg.rows(d.n_x + d.n_u, d.n_p).into_owned()
    }

    fn lq_vars(&self) -> usize {
        self.transcription.layout.n_vars() - self.dims().n_x
    }

    fn lq_cons(&self) -> usize {
        self.transcription.layout.n_cons() - self.dims().n_x
    }

    fn var(&self, k: usize, a: usize) -> usize {
        self.transcription.layout.y_index(k, a) - self.dims().n_x
    }

    fn terminal_vars(&self) -> Vec<usize> {
        let nx = self.dims().n_x;
        self.transcription.layout.terminal_indices().into_iter().map(|i| i - nx).collect()
    }

    fn row(&self, k: usize) -> usize {
        self.transcription.layout.defect(k) - self.dims().n_x
    }

    fn build_kkt(&self) -> Result<LqKkt, SensitivityError> {
        let d = self.dims();
        let tr = &self.transcription;
        let n = tr.grid.nodes_per_interval();
        let dm = tr.grid.differentiation();
        let (n_v, m) = (self.lq_vars(), self.lq_cons());
        let mut t = Triplets::new(n_v + m, n_v + m);
        let tv = self.terminal_vars();
        for a in 0..tv.len() {
            for b in 0..=a {
                t.push(tv[a].max(tv[b]), tv[a].min(tv[b]), self.terminal_hessian[(a, b)]);
            }
        }
        for (k, nb) in self.nodes.iter().enumerate() {
            for a in 0..d.n_y() {
                for b in 0..=a {
                    let (i, j) = (self.var(k, a), self.var(k, b));
                    t.push(i.max(j), i.min(j), nb.weight * nb.h_yy[(a, b)]);
                }
            }
            let row = n_v + self.row(k);
            let (interval, r) = tr.grid.node_location(k);
            for j in 0..=n {
                let point = interval * n + j;
                if point == 0 {
                    continue;
                }
                let col = tr.layout.x(point) - d.n_x;
                for a in 0..d.n_x {
                    t.push(row + a, col + a, -dm[(r, j)]);
                }
            }
            for b in 0..d.n_y() {
                let col = self.var(k, b);
                for a in 0..d.n_x {
                    t.push(row + a, col, nb.defect_scale * nb.f_y[(a, b)]);
                }
            }
        }
        let matrix = SymmetricSparse::from_triplets(n_v + m, &t);
        let fact = SymmetricFactorization::factor(&matrix)?;
        let expected = Inertia { positive: n_v, negative: m, zero: 0 };
        if fact.inertia() != expected {
            return Err(SensitivityError::SsocViolation { found: fact.inertia(), expected });
        }
        Ok(LqKkt { matrix, fact, n_v })
    }

    fn kkt(&self) -> Result<&LqKkt, SensitivityError> {
        match self.kkt.get_or_init(|| self.build_kkt().map_err(|e| e.to_string())) {
            Ok(k) => Ok(k),
            Err(_) => Err(self.build_kkt().err().unwrap_or(SensitivityError::NotConverged)),
        }
    }

    /// Inertia of the LQ KKT matrix (positive, negative, zero).
    pub fn kkt_inertia(&self) -> Result<Inertia, SensitivityError> {
        Ok(self.kkt()?.fact.inertia())
    }

    /// Solve the LQ problem with per-node linear objective terms `c_k`
    /// (in `y`), a terminal linear term `sigma` on `(δx_f, δp)` and per-node
    /// dynamics forcing `r_k`.
    pub fn solve_linear_terms(
        &self,
        c: &[DVector<f64>],
        sigma: &DVector<f64>,
        r: &[DVector<f64>],
    ) -> Result<LqSolution, SensitivityError> {
        let d = self.dims();
        let kkt = self.kkt()?;
        let n_v = kkt.n_v;
        let mut rhs = vec![0.0; kkt.matrix.dim()];
        for (k, nb) in self.nodes.iter().enumerate() {
            for a in 0..d.n_y() {
                rhs[self.var(k, a)] -= nb.weight * c[k][a];
            }
            let row = n_v + self.row(k);
            for a in 0..d.n_x {
                rhs[row + a] = -nb.defect_scale * r[k][a];
            }
        }
        for (a, i) in self.terminal_vars().into_iter().enumerate() {
            rhs[i] -= sigma[a];
        }
        let sol = kkt.fact.solve_refined(&kkt.matrix, &rhs, 1e-10)?;
        Ok(self.unpack(&sol))
    }

    fn unpack(&self, sol: &DVector<f64>) -> LqSolution {
        let d = self.dims();
        let tr = &self.transcription;
        let n_v = self.lq_vars();
        let mut dx = vec![vec![0.0; d.n_x]];
        for p in 1..tr.grid.num_points() {
            let i = tr.layout.x(p) - d.n_x;
            dx.push(sol.as_slice()[i..i + d.n_x].to_vec());
        }
        let du = (0..self.num_nodes())
            .map(|k| {
                let i = tr.layout.u(k) - d.n_x;
                sol.as_slice()[i..i + d.n_u].to_vec()
            })
            .collect();
        let pi = tr.layout.p() - d.n_x;
        let dp = sol.as_slice()[pi..pi + d.n_p].to_vec();
        let dlambda = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, nb)| {
                let row = n_v + self.row(k);
                sol.as_slice()[row..row + d.n_x].iter().map(|v| v / nb.local_weight).collect()
            })
            .collect();
        LqSolution { dx, du, dp, dlambda }
    }

    /// QoI running-cost gradients at node `k`: composed `y` part and `g` part.
    pub fn qoi_running_gradients(&self, qoi: &dyn Qoi, k: usize) -> Option<(DVector<f64>, DVector<f64>)> {
        let d = self.dims();
        let nb = &self.nodes[k];
        qoi.running_gradient(nb.t, &nb.y, nb.g.as_slice()).map(|grad| {
            let gy = composed_gradient(&grad, &nb.g_y, d);
            let gg = grad.rows(d.n_y(), d.n_g).into_owned();
            (gy, gg)
        })
    }
}

/// Solution of an LQ system: the forward sensitivity or the adjoint.
///
/// `dx` is sampled at every grid point (point 0 is the fixed initial state,
/// so `dx[0] = 0`), `du` and `dlambda` at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    pub dx: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub dp: Vec<f64>,
    pub dlambda: Vec<Vec<f64>>,
}

pub type SensitivitySolution = LqSolution;

impl LqSolution {
    /// `(δx, δu, δp)` at node `k`.
    pub fn dy(&self, k: usize) -> DVector<f64> {
        let v: Vec<f64> = self.dx[k + 1].iter().chain(&self.du[k]).chain(&self.dp).copied().collect();
        DVector::from_vec(v)
    }

    pub fn max_abs(&self) -> f64 {
        self.dx
            .iter()
            .chain(&self.du)
            .chain(&self.dlambda)
            .flatten()
            .chain(&self.dp)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Perturbation `δg` and its partials sampled at the nodes of the base
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationData {
    pub dg: Vec<DVector<f64>>,
    /// `δg_y = [δg_x, δg_u, δg_p]`, `n_g × n_y` per node.
    pub dg_y: Vec<DMatrix<f64>>,
}

impl PerturbationData {
    pub fn zeros(lq: &LqData) -> Self {
        let d = lq.dims();
        Self {
            dg: vec![DVector::zeros(d.n_g); lq.num_nodes()],
            dg_y: vec![DMatrix::zeros(d.n_g, d.n_y()); lq.num_nodes()],
        }
    }

    /// Samples of `a − b` and its Jacobian along the base trajectory.
    pub fn between(lq: &LqData, a: &dyn ComponentFunction, b: &dyn ComponentFunction) -> Self {
        let (dg, dg_y) = lq
            .nodes
            .iter()
            .map(|nb| (a.value(nb.t, &nb.y) - b.value(nb.t, &nb.y), a.jacobian(nb.t, &nb.y) - b.jacobian(nb.t, &nb.y)))
            .unzip();
        Self { dg, dg_y }
    }

    /// Samples of a perturbation function `δg` itself.
    pub fn of(lq: &LqData, dg: &dyn ComponentFunction) -> Self {
        let (v, j) = lq.nodes.iter().map(|nb| (dg.value(nb.t, &nb.y), dg.jacobian(nb.t, &nb.y))).unzip();
        Self { dg: v, dg_y: j }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            dg: self.dg.iter().map(|v| v * alpha).collect(),
            dg_y: self.dg_y.iter().map(|m| m * alpha).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dg.is_empty()
    }

    pub(crate) fn check(&self, lq: &LqData) -> Result<(), SensitivityError> {
        let d = lq.dims();
        if self.dg.len() != lq.num_nodes() || self.dg_y.len() != lq.num_nodes() {
            return Err(SensitivityError::GridMismatch { expected: lq.num_nodes(), got: self.dg.len() });
        }
        for (v, m) in self.dg.iter().zip(&self.dg_y) {
            if v.len() != d.n_g || m.nrows() != d.n_g || m.ncols() != d.n_y() {
                return Err(SensitivityError::GridMismatch { expected: d.n_g, got: v.len() });
            }
        }
        Ok(())
    }
}

fn describe_variable(tr: &Transcription, index: usize, upper: bool) -> String {
    let d = tr.layout.dims;
    let side = if upper { "upper" } else { "lower" };
    if index >= tr.layout.p() {
        return format!("{side} bound of parameter {}", index - tr.layout.p());
    }
    let local = index - d.n_x;
    let (k, a) = (local / (d.n_x + d.n_u), local % (d.n_x + d.n_u));
    if a < d.n_x {
        format!("{side} bound of state {a} at node {k} (t = {})", tr.node_time(k))
    } else {
        format!("{side} bound of control {} at node {k} (t = {})", a - d.n_x, tr.node_time(k))
    }
}

/// Evaluate all Hamiltonian blocks along a converged collocation solution.
pub fn assemble_lq_data(sol: &CollocationSolution) -> Result<LqData, SensitivityError> {
    if !sol.converged() {
        return Err(SensitivityError::NotConverged);
    }
    let tr = &sol.transcription;
    if tr.prob.second_derivatives() != DerivativeSource::Analytic {
        return Err(SensitivityError::FiniteDifferenceDerivatives);
    }
    for (i, (lo, hi)) in sol.nlp.z_lower.iter().zip(&sol.nlp.z_upper).enumerate() {
        if *lo > ACTIVE_BOUND_THRESHOLD || *hi > ACTIVE_BOUND_THRESHOLD {
            let upper = hi > lo;
            return Err(SensitivityError::ActiveBound {
                bound: describe_variable(tr, i, upper),
                multiplier: lo.max(*hi),
            });
        }
    }
    let d = tr.layout.dims;
    let funcs = &tr.prob.funcs;
    let mut nodes = Vec::with_capacity(tr.grid.num_nodes());
    for k in 0..tr.grid.num_nodes() {
        let t = tr.node_time(k);
        let y = sol.node_y(k);
        let lambda = DVector::from_vec(sol.lambda_node(k));
        let ge = ComponentEval::at(tr.prob.g.as_ref(), t, &y, true);
        if !ge.is_finite() {
            return Err(SensitivityError::NonFinite { what: "component function", node: k });
        }
        let g = ge.value.as_slice();
        let f_w = funcs.dynamics_jacobian(t, &y, g);
        let m = funcs.dynamics_hessian(t, &y, g, lambda.as_slice()) + funcs.running_cost_hessian(t, &y, g);
        let grad_w = f_w.tr_mul(&lambda) + funcs.running_cost_gradient(t, &y, g);
        let d_vec = grad_w.rows(d.n_y(), d.n_g).into_owned();
        let h_yy = composed_hessian(&m, &d_vec, &ge.jacobian, ge.hessians.as_deref().unwrap_or(&[]), d);
        let h_yg = mixed_g_block(&m, &ge.jacobian, d);
        let f_y = composed_jacobian(&f_w, &ge.jacobian, d);
        let f_g = f_w.columns(d.n_y(), d.n_g).into_owned();
        let finite = [&h_yy, &h_yg, &f_y, &f_g].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && d_vec.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SensitivityError::NonFinite { what: "hamiltonian blocks", node: k });
        }
        nodes.push(NodeBlocks {
            t,
            weight: tr.quadrature_weight(k),
            defect_scale: tr.defect_scale(k),
            local_weight: tr.grid.local_weight(k),
            y,
            g: ge.value,
            g_y: ge.jacobian,
            lambda,
            f_y,
            f_g,
            h_yy,
            h_yg,
            d: d_vec,
        });
    }
    let x_final = sol.x_point(tr.grid.num_points() - 1);
    let p = sol.params();
    let terminal_hessian = funcs.terminal_cost_hessian(&x_final, &p);
    Ok(LqData { transcription: tr.clone(), nodes, terminal_hessian, x_final, p, kkt: OnceLock::new() })
}

/// Solve the forward sensitivity system for the perturbation `pert`.
pub fn solve_sensitivity(lq: &LqData, pert: &PerturbationData) -> Result<SensitivitySolution, SensitivityError> {
    pert.check(lq)?;
    let d = lq.dims();
    let mut c = Vec::with_capacity(lq.num_nodes());
    let mut r = Vec::with_capacity(lq.num_nodes());
    for (k, nb) in lq.nodes.iter().enumerate() {
        c.push(&nb.h_yg * &pert.dg[k] + pert.dg_y[k].tr_mul(&nb.d));
        r.push(&nb.f_g * &pert.dg[k]);
    }
    lq.solve_linear_terms(&c, &DVector::zeros(d.n_x + d.n_p), &r)
}

/// Derivative of the QoI along the forward sensitivity `dz` of `pert`.
pub fn forward_qoi_derivative(
    lq: &LqData,
    dz: &SensitivitySolution,
    pert: &PerturbationData,
    qoi: &dyn Qoi,
) -> Result<f64, SensitivityError> {
    pert.check(lq)?;
    let d = lq.dims();
    let grad_f = qoi.terminal_gradient(&lq.x_final, &lq.p);
    let last = dz.dx.len() - 1;
    let mut q: f64 = (0..d.n_x).map(|a| grad_f[a] * dz.dx[last][a]).sum();
    q += (0..d.n_p).map(|a| grad_f[d.n_x + a] * dz.dp[a]).sum::<f64>();
    for (k, nb) in lq.nodes.iter().enumerate() {
        if let Some((gy, gg)) = lq.qoi_running_gradients(qoi, k) {
            q += nb.weight * (gy.dot(&dz.dy(k)) + gg.dot(&pert.dg[k]));
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::CollocationGrid;
    use crate::nlp::SolverConfig;
    use crate::toy;

    fn solved(prob: crate::ocp::OcpProblem, grid: CollocationGrid) -> CollocationSolution {
        let tr = Transcription::new(prob, grid).unwrap();
        let n_u = tr.layout.dims.n_u;
        let z0 = tr.pack_fn(|_| (vec![0.5], vec![0.0; n_u]), &[]).unwrap();
        tr.solve(&z0, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn constant_component_leaves_plain_hamiltonian_blocks() {
        let sol = solved(toy::linear_quadratic(1.0, 0.2).unwrap(), CollocationGrid::uniform(3, 3).unwrap());
        let lq = assemble_lq_data(&sol).unwrap();
        for k in 0..lq.num_nodes() {
            assert_eq!(lq.h_xx(k)[(0, 0)], 1.0);
            assert_eq!(lq.h_uu(k)[(0, 0)], 1.0);
            assert_eq!(lq.a(k)[(0, 0)], 0.0);
            assert_eq!(lq.b(k)[(0, 0)], 1.0);
        }
    }

    #[test]
    fn zero_perturbation_gives_zero_solution() {
        let sol = solved(toy::squared_state().unwrap(), CollocationGrid::uniform(2, 3).unwrap());
        let lq = assemble_lq_data(&sol).unwrap();
        let dz = solve_sensitivity(&lq, &PerturbationData::zeros(&lq)).unwrap();
        assert_eq!(dz.max_abs(), 0.0);
    }

    #[test]
    fn perturbation_on_wrong_grid_is_rejected() {
        let sol = solved(toy::squared_state().unwrap(), CollocationGrid::uniform(2, 3).unwrap());
        let lq = assemble_lq_data(&sol).unwrap();
        let mut pert = PerturbationData::zeros(&lq);
        pert.dg.pop();
        assert!(matches!(solve_sensitivity(&lq, &pert), Err(SensitivityError::GridMismatch { .. })));
    }
}
