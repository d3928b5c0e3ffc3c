use nalgebra::{DMatrix, DVector};

use super::{CollocationError, CollocationGrid};
use crate::nlp::{self, NlpProblem, NlpSolution, SolveStatus, SolverConfig, Triplets};
use crate::ocp::{composed_gradient, composed_hessian, composed_jacobian, ComponentEval, Dims, OcpProblem, Trajectory};

/// Index arithmetic for the NLP variable and constraint vectors.
///
/// Variables: the state at point 0, then `(x, u)` at each node, then `p`.
/// Constraints: the initial condition, then the `n_x` defects of each node.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub dims: Dims,
    pub num_nodes: usize,
}

impl Layout {
    fn stride(&self) -> usize {
        self.dims.n_x + self.dims.n_u
    }

    /// First index of the state at point `p`.
    pub fn x(&self, p: usize) -> usize {
        if p == 0 {
            0
        } else {
            self.dims.n_x + (p - 1) * self.stride()
        }
    }

    /// First index of the control at node `k`.
    pub fn u(&self, k: usize) -> usize {
        self.dims.n_x + k * self.stride() + self.dims.n_x
    }

    pub fn p(&self) -> usize {
        self.dims.n_x + self.num_nodes * self.stride()
    }

    pub fn n_vars(&self) -> usize {
        self.p() + self.dims.n_p
    }

    pub fn n_cons(&self) -> usize {
        self.dims.n_x * (self.num_nodes + 1)
    }

    /// First constraint row of node `k`'s defect.
    pub fn defect(&self, k: usize) -> usize {
        self.dims.n_x * (k + 1)
    }

    /// Global variable index of entry `a` of `y = (x, u, p)` at node `k`.
    pub fn y_index(&self, k: usize, a: usize) -> usize {
        let d = self.dims;
        if a < d.n_x {
            self.x(k + 1) + a
        } else if a < d.n_x + d.n_u {
            self.u(k) + a - d.n_x
        } else {
            self.p() + a - d.n_x - d.n_u
        }
    }

    /// Global indices of `(x_f, p)`.
    pub fn terminal_indices(&self) -> Vec<usize> {
        let xf = self.x(self.num_nodes);
        (xf..xf + self.dims.n_x).chain(self.p()..self.p() + self.dims.n_p).collect()
    }
}

/// The collocation NLP of an [`OcpProblem`] on a [`CollocationGrid`].
#[derive(Debug, Clone)]
pub struct Transcription {
    pub prob: OcpProblem,
    pub grid: CollocationGrid,
    pub layout: Layout,
    t0: f64,
    tf: f64,
}

impl Transcription {
    pub fn new(prob: OcpProblem, grid: CollocationGrid) -> Result<Self, CollocationError> {
        prob.validate()?;
        let (t0, tf) = prob.interval();
        let layout = Layout { dims: prob.dims, num_nodes: grid.num_nodes() };
        Ok(Self { prob, grid, layout, t0, tf })
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    /// Problem time of normalized position `s`.
    pub fn time(&self, s: f64) -> f64 {
        if s == 1.0 {
            self.tf
        } else {
            self.t0 + (self.tf - self.t0) * s
        }
    }

    pub fn node_time(&self, k: usize) -> f64 {
        self.time(self.grid.node_position(k))
    }

    pub fn point_time(&self, p: usize) -> f64 {
        self.time(self.grid.point_position(p))
    }

    /// Quadrature weight of node `k` in problem time.
    pub fn quadrature_weight(&self, k: usize) -> f64 {
        (self.tf - self.t0) * self.grid.node_weight(k)
    }

    /// Defect scaling `(t_f − t_0) · half width` of the interval of node `k`.
    pub fn defect_scale(&self, k: usize) -> f64 {
        (self.tf - self.t0) * self.grid.half_width(self.grid.node_location(k).0)
    }

    /// `y = (x, u, p)` at node `k`.
    pub fn node_y(&self, z: &[f64], k: usize) -> Vec<f64> {
        let d = self.layout.dims;
        let (xi, ui, pi) = (self.layout.x(k + 1), self.layout.u(k), self.layout.p());
        d.pack_y(&z[xi..xi + d.n_x], &z[ui..ui + d.n_u], &z[pi..pi + d.n_p])
    }

    pub fn point_x<'a>(&self, z: &'a [f64], p: usize) -> &'a [f64] {
        let i = self.layout.x(p);
        &z[i..i + self.layout.dims.n_x]
    }

    pub fn node_u<'a>(&self, z: &'a [f64], k: usize) -> &'a [f64] {
        let i = self.layout.u(k);
        &z[i..i + self.layout.dims.n_u]
    }

    pub fn params<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        let i = self.layout.p();
        &z[i..i + self.layout.dims.n_p]
    }

    /// Pack states at all points, controls at all nodes and parameters.
    pub fn pack(&self, x_points: &[Vec<f64>], u_nodes: &[Vec<f64>], p: &[f64]) -> Result<Vec<f64>, CollocationError> {
        let d = self.layout.dims;
        if x_points.len() != self.grid.num_points() || u_nodes.len() != self.grid.num_nodes() || p.len() != d.n_p {
            return Err(CollocationError::DimensionMismatch("initial guess sample counts".into()));
        }
        let mut z = vec![0.0; self.layout.n_vars()];
        for (pt, x) in x_points.iter().enumerate() {
            if x.len() != d.n_x {
                return Err(CollocationError::DimensionMismatch("initial guess state length".into()));
            }
            let i = self.layout.x(pt);
            z[i..i + d.n_x].copy_from_slice(x);
        }
        for (k, u) in u_nodes.iter().enumerate() {
            if u.len() != d.n_u {
                return Err(CollocationError::DimensionMismatch("initial guess control length".into()));
            }
            let i = self.layout.u(k);
            z[i..i + d.n_u].copy_from_slice(u);
        }
        let i = self.layout.p();
        z[i..i + d.n_p].copy_from_slice(p);
        Ok(z)
    }

    /// Pack from functions of normalized position giving `(x, u)`.
    pub fn pack_fn<F>(&self, f: F, p: &[f64]) -> Result<Vec<f64>, CollocationError>
    where
        F: Fn(f64) -> (Vec<f64>, Vec<f64>),
    {
        let xs = (0..self.grid.num_points()).map(|pt| f(self.grid.point_position(pt)).0).collect::<Vec<_>>();
        let us = (0..self.grid.num_nodes()).map(|k| f(self.grid.node_position(k)).1).collect::<Vec<_>>();
        self.pack(&xs, &us, p)
    }

    /// Largest absolute collocation defect (excluding the initial condition).
    pub fn max_defect(&self, z: &[f64]) -> f64 {
        let c = self.constraints(z);
        c.rows(self.layout.dims.n_x, c.len() - self.layout.dims.n_x).amax()
    }

    fn component(&self, k: usize, y: &[f64], hessians: bool) -> ComponentEval {
        ComponentEval::at(self.prob.g.as_ref(), self.node_time(k), y, hessians)
    }

    /// Solve the NLP from `z_init`.
    pub fn solve(&self, z_init: &[f64], config: &SolverConfig) -> Result<CollocationSolution, CollocationError> {
        let c0 = self.constraints(z_init);
        if c0.iter().any(|v| !v.is_finite()) || !self.objective(z_init).is_finite() {
            return Err(CollocationError::NonFiniteGuess);
        }
        let sol = nlp::solve(self, z_init, config)?;
        Ok(CollocationSolution::new(self.clone(), sol))
    }
}

impl NlpProblem for Transcription {
    fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn n_cons(&self) -> usize {
        self.layout.n_cons()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.n_vars();
        let b = &self.prob.bounds;
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for k in 0..self.grid.num_nodes() {
            let xi = self.layout.x(k + 1);
            lo[xi..xi + b.x_lower.len()].copy_from_slice(&b.x_lower);
            hi[xi..xi + b.x_upper.len()].copy_from_slice(&b.x_upper);
            let ui = self.layout.u(k);
            lo[ui..ui + b.u_lower.len()].copy_from_slice(&b.u_lower);
            hi[ui..ui + b.u_upper.len()].copy_from_slice(&b.u_upper);
        }
        let pi = self.layout.p();
        lo[pi..pi + b.p_lower.len()].copy_from_slice(&b.p_lower);
        hi[pi..pi + b.p_upper.len()].copy_from_slice(&b.p_upper);
        (lo, hi)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let f = &self.prob.funcs;
        let mut obj = f.terminal_cost(self.point_x(z, self.grid.num_points() - 1), self.params(z));
        for k in 0..self.grid.num_nodes() {
            let y = self.node_y(z, k);
            let g = self.prob.g.value(self.node_time(k), &y);
            obj += self.quadrature_weight(k) * f.running_cost(self.node_time(k), &y, g.as_slice());
        }
        obj
    }

    fn gradient(&self, z: &[f64]) -> DVector<f64> {
        let d = self.layout.dims;
        let f = &self.prob.funcs;
        let mut grad = DVector::zeros(self.layout.n_vars());
        let tg = f.terminal_cost_gradient(self.point_x(z, self.grid.num_points() - 1), self.params(z));
        for (a, idx) in self.layout.terminal_indices().into_iter().enumerate() {
            grad[idx] += tg[a];
        }
        for k in 0..self.grid.num_nodes() {
            let y = self.node_y(z, k);
            let t = self.node_time(k);
            let ge = self.component(k, &y, false);
            let lw = f.running_cost_gradient(t, &y, ge.value.as_slice());
            let gy = composed_gradient(&lw, &ge.jacobian, d);
            let w = self.quadrature_weight(k);
            for a in 0..d.n_y() {
                grad[self.layout.y_index(k, a)] += w * gy[a];
            }
        }
        grad
    }

    fn constraints(&self, z: &[f64]) -> DVector<f64> {
        let d = self.layout.dims;
        let n = self.grid.nodes_per_interval();
        let dm = self.grid.differentiation();
        let mut c = DVector::zeros(self.layout.n_cons());
        for i in 0..d.n_x {
            c[i] = z[i] - self.prob.x0[i];
        }
        for k in 0..self.grid.num_nodes() {
            let (interval, r) = self.grid.node_location(k);
            let y = self.node_y(z, k);
            let t = self.node_time(k);
            let g = self.prob.g.value(t, &y);
            let fv = self.prob.funcs.dynamics(t, &y, g.as_slice());
            let h = self.defect_scale(k);
            let row = self.layout.defect(k);
            for a in 0..d.n_x {
                c[row + a] = h * fv[a];
            }
            for j in 0..=n {
                let xj = self.point_x(z, interval * n + j);
                let coef = dm[(r, j)];
                for a in 0..d.n_x {
                    c[row + a] -= coef * xj[a];
                }
            }
        }
        c
    }

    fn jacobian(&self, z: &[f64]) -> Triplets {
        let d = self.layout.dims;
        let n = self.grid.nodes_per_interval();
        let dm = self.grid.differentiation();
        let nodes = self.grid.num_nodes();
        let mut t = Triplets::with_capacity(
            self.layout.n_cons(),
            self.layout.n_vars(),
            d.n_x + nodes * d.n_x * (n + 1 + d.n_y()),
        );
        for i in 0..d.n_x {
            t.push(i, i, 1.0);
        }
        for k in 0..nodes {
            let (interval, r) = self.grid.node_location(k);
            let y = self.node_y(z, k);
            let tk = self.node_time(k);
            let ge = self.component(k, &y, false);
            let fw = self.prob.funcs.dynamics_jacobian(tk, &y, ge.value.as_slice());
            let fy = composed_jacobian(&fw, &ge.jacobian, d);
            let h = self.defect_scale(k);
            let row = self.layout.defect(k);
            for j in 0..=n {
                let col = self.layout.x(interval * n + j);
                for a in 0..d.n_x {
                    t.push(row + a, col + a, -dm[(r, j)]);
                }
            }
            for b in 0..d.n_y() {
                let col = self.layout.y_index(k, b);
                for a in 0..d.n_x {
                    t.push(row + a, col, h * fy[(a, b)]);
                }
            }
        }
        t
    }

    fn hessian(&self, z: &[f64], obj_factor: f64, mult: &[f64]) -> Triplets {
        let d = self.layout.dims;
        let f = &self.prob.funcs;
        let nodes = self.grid.num_nodes();
        let n_y = d.n_y();
        let nv = self.layout.n_vars();
        let mut t = Triplets::with_capacity(nv, nv, nodes * n_y * (n_y + 1) / 2 + (d.n_x + d.n_p).pow(2));
        let xf = self.point_x(z, self.grid.num_points() - 1);
        let th = f.terminal_cost_hessian(xf, self.params(z));
        let tidx = self.layout.terminal_indices();
        for a in 0..tidx.len() {
            for b in 0..=a {
                let (i, j) = (tidx[a], tidx[b]);
                t.push(i.max(j), i.min(j), obj_factor * th[(a, b)]);
            }
        }
        for k in 0..nodes {
            let hk = node_lagrangian_hessian(self, z, k, obj_factor, &mult[self.layout.defect(k)..][..d.n_x]);
            for a in 0..n_y {
                for b in 0..=a {
                    let (i, j) = (self.layout.y_index(k, a), self.layout.y_index(k, b));
                    t.push(i.max(j), i.min(j), hk[(a, b)]);
                }
            }
        }
        t
    }
}

/// `∇²_yy [obj_factor · W_k l + h_k μᵀ f]` at node `k`, composed with `g`.
fn node_lagrangian_hessian(tr: &Transcription, z: &[f64], k: usize, obj_factor: f64, mu: &[f64]) -> DMatrix<f64> {
    let d = tr.layout.dims;
    let f = &tr.prob.funcs;
    let y = tr.node_y(z, k);
    let t = tr.node_time(k);
    let ge = tr.component(k, &y, true);
    let g = ge.value.as_slice();
    let w = obj_factor * tr.quadrature_weight(k);
    let h = tr.defect_scale(k);
    let hmu: Vec<f64> = mu.iter().map(|m| h * m).collect();
    let mut m = f.dynamics_hessian(t, &y, g, &hmu);
    let mut grad_g = f.dynamics_jacobian(t, &y, g).tr_mul(&DVector::from_column_slice(&hmu));
    if w != 0.0 {
        m += f.running_cost_hessian(t, &y, g) * w;
        grad_g += f.running_cost_gradient(t, &y, g) * w;
    }
    let grad_g = grad_g.rows(d.n_y(), d.n_g).into_owned();
    composed_hessian(&m, &grad_g, &ge.jacobian, ge.hessians.as_deref().unwrap_or(&[]), d)
}

/// A solved collocation NLP with accessors in problem terms.
#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub transcription: Transcription,
    pub nlp: NlpSolution,
}

impl CollocationSolution {
    pub fn new(transcription: Transcription, nlp: NlpSolution) -> Self {
        Self { transcription, nlp }
    }

    pub fn converged(&self) -> bool {
        self.nlp.status == SolveStatus::Converged
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.transcription.grid
    }

    pub fn dims(&self) -> Dims {
        self.transcription.layout.dims
    }

    pub fn z(&self) -> &[f64] {
        &self.nlp.z
    }

    pub fn x_point(&self, p: usize) -> Vec<f64> {
        self.transcription.point_x(&self.nlp.z, p).to_vec()
    }

    pub fn u_node(&self, k: usize) -> Vec<f64> {
        self.transcription.node_u(&self.nlp.z, k).to_vec()
    }

    pub fn params(&self) -> Vec<f64> {
        self.transcription.params(&self.nlp.z).to_vec()
    }

    pub fn node_y(&self, k: usize) -> Vec<f64> {
        self.transcription.node_y(&self.nlp.z, k)
    }

    /// Costate at node `k`: the defect multipliers divided by the local LGR
    /// weight, which approximates `λ(t_k)` of the continuous problem.
    pub fn lambda_node(&self, k: usize) -> Vec<f64> {
        let l = &self.transcription.layout;
        let w = self.grid().local_weight(k);
        self.nlp.y[l.defect(k)..l.defect(k) + l.dims.n_x].iter().map(|v| v / w).collect()
    }

    pub fn x_points(&self) -> Vec<Vec<f64>> {
        (0..self.grid().num_points()).map(|p| self.x_point(p)).collect()
    }

    pub fn u_nodes(&self) -> Vec<Vec<f64>> {
        (0..self.grid().num_nodes()).map(|k| self.u_node(k)).collect()
    }

    pub fn lambda_nodes(&self) -> Vec<Vec<f64>> {
        (0..self.grid().num_nodes()).map(|k| self.lambda_node(k)).collect()
    }

    fn position(&self, t: f64) -> Result<f64, CollocationError> {
        let (t0, tf) = self.transcription.horizon();
        if !(t >= t0 && t <= tf) {
            return Err(CollocationError::OutsideHorizon { s: (t - t0) / (tf - t0) });
        }
        Ok(if t == tf { 1.0 } else { (t - t0) / (tf - t0) })
    }

    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, CollocationError> {
        self.grid().interpolate_points(&self.x_points(), self.position(t)?)
    }

    pub fn control_at(&self, t: f64) -> Result<Vec<f64>, CollocationError> {
        self.grid().interpolate_nodes(&self.u_nodes(), self.position(t)?)
    }

    pub fn costate_at(&self, t: f64) -> Result<Vec<f64>, CollocationError> {
        self.grid().interpolate_nodes(&self.lambda_nodes(), self.position(t)?)
    }

    /// Largest absolute bound multiplier and the variable it belongs to.
    pub fn largest_bound_multiplier(&self) -> (f64, usize) {
        self.nlp
            .z_lower
            .iter()
            .zip(&self.nlp.z_upper)
            .enumerate()
            .map(|(i, (a, b))| (a.max(*b), i))
            .fold((0.0, 0), |acc, v| if v.0 > acc.0 { v } else { acc })
    }

    /// Trajectory at all grid points; controls and costates at point 0 are
    /// extrapolated from the first interval's nodes.
    pub fn trajectory(&self) -> Trajectory {
        let g = self.grid();
        let times: Vec<f64> = (0..g.num_points()).map(|p| self.transcription.point_time(p)).collect();
        let us = self.u_nodes();
        let ls = self.lambda_nodes();
        let mut u = vec![g.interpolate_nodes(&us, 0.0).expect("position 0 is on the grid")];
        u.extend(us);
        let mut lambda = vec![g.interpolate_nodes(&ls, 0.0).expect("position 0 is on the grid")];
        lambda.extend(ls);
        Trajectory { times, x: self.x_points(), u, p: self.params(), lambda: Some(lambda) }
    }
}
