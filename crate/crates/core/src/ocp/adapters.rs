use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ComponentFunction, DerivativeSource, Dims, ProblemFunctions, Qoi};

/// Converts a problem on a physical horizon into one on `τ ∈ [0, 1]` with the
/// duration `T = p[duration_index]` multiplying the dynamics (and, optionally,
/// the running cost). The inner functions are evaluated at `τ`.
pub struct TimeNormalized {
    inner: Arc<dyn ProblemFunctions>,
    duration_slot: usize,
    scale_running_cost: bool,
}

impl TimeNormalized {
    pub fn new(inner: Arc<dyn ProblemFunctions>, duration_index: usize, scale_running_cost: bool) -> Self {
        let d = inner.dims();
        assert!(duration_index < d.n_p, "duration index out of range");
        Self { inner, duration_slot: d.n_x + d.n_u + duration_index, scale_running_cost }
    }

    fn duration(&self, y: &[f64]) -> f64 {
        y[self.duration_slot]
    }

    /// Hessian of `T·F` from `H = ∇²F` and `v = ∇F`: `T H + e_T vᵀ + v e_Tᵀ`.
    fn scaled_hessian(&self, t_dur: f64, mut h: DMatrix<f64>, grad: &DVector<f64>) -> DMatrix<f64> {
        h *= t_dur;
        let k = self.duration_slot;
        for j in 0..grad.len() {
            h[(k, j)] += grad[j];
            h[(j, k)] += grad[j];
        }
        h
    }
}

impl ProblemFunctions for TimeNormalized {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn dynamics(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        self.inner.dynamics(t, y, g) * self.duration(y)
    }

    fn dynamics_jacobian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let mut j = self.inner.dynamics_jacobian(t, y, g) * self.duration(y);
        let f = self.inner.dynamics(t, y, g);
        let mut col = j.column_mut(self.duration_slot);
        col += f;
        j
    }

    fn dynamics_hessian(&self, t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let h = self.inner.dynamics_hessian(t, y, g, weights);
        let jt_mu = self.inner.dynamics_jacobian(t, y, g).tr_mul(&DVector::from_column_slice(weights));
        self.scaled_hessian(self.duration(y), h, &jt_mu)
    }

    fn running_cost(&self, t: f64, y: &[f64], g: &[f64]) -> f64 {
        let l = self.inner.running_cost(t, y, g);
        if self.scale_running_cost {
            l * self.duration(y)
        } else {
            l
        }
    }

    fn running_cost_gradient(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        let grad = self.inner.running_cost_gradient(t, y, g);
        if !self.scale_running_cost {
            return grad;
        }
        let mut out = &grad * self.duration(y);
        out[self.duration_slot] += self.inner.running_cost(t, y, g);
        out
    }

    fn running_cost_hessian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let h = self.inner.running_cost_hessian(t, y, g);
        if !self.scale_running_cost {
            return h;
        }
        let grad = self.inner.running_cost_gradient(t, y, g);
        self.scaled_hessian(self.duration(y), h, &grad)
    }

    fn terminal_cost(&self, xf: &[f64], p: &[f64]) -> f64 {
        self.inner.terminal_cost(xf, p)
    }

    fn terminal_cost_gradient(&self, xf: &[f64], p: &[f64]) -> DVector<f64> {
        self.inner.terminal_cost_gradient(xf, p)
    }

    fn terminal_cost_hessian(&self, xf: &[f64], p: &[f64]) -> DMatrix<f64> {
        self.inner.terminal_cost_hessian(xf, p)
    }

    fn second_derivatives(&self) -> DerivativeSource {
        self.inner.second_derivatives()
    }
}

fn unscale(v: &[f64], s: &[f64]) -> Vec<f64> {
    v.iter().zip(s).map(|(a, b)| a / b).collect()
}

/// Scale a matrix `m ↦ diag(r) m diag(c)`.
fn scale_rows_cols(mut m: DMatrix<f64>, r: &[f64], c: &[f64]) -> DMatrix<f64> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= r[i] * c[j];
        }
    }
    m
}

fn scale_vec(mut v: DVector<f64>, s: &[f64]) -> DVector<f64> {
    for (a, b) in v.iter_mut().zip(s) {
        *a *= b;
    }
    v
}

/// Problem functions in scaled variables `ỹ = s ⊙ y`, with the dynamics
/// scaled like the state (`x̃' = s_x ⊙ f`). The component outputs are left
/// unscaled.
pub struct ScaledFunctions {
    inner: Arc<dyn ProblemFunctions>,
    s_y: Vec<f64>,
    s_x: Vec<f64>,
    /// `(1/s_y, 1_g)`.
    inv_w: Vec<f64>,
    /// `(1/s_x, 1/s_p)`.
    inv_terminal: Vec<f64>,
}

impl ScaledFunctions {
    pub fn new(inner: Arc<dyn ProblemFunctions>, s_y: Vec<f64>) -> Self {
        let d = inner.dims();
        assert_eq!(s_y.len(), d.n_y());
        let mut inv_w: Vec<f64> = s_y.iter().map(|s| 1.0 / s).collect();
        inv_w.extend(std::iter::repeat_n(1.0, d.n_g));
        let inv_terminal = d.x_range().chain(d.p_range()).map(|i| 1.0 / s_y[i]).collect();
        Self { s_x: s_y[d.x_range()].to_vec(), inner, s_y, inv_w, inv_terminal }
    }

    fn y(&self, y: &[f64]) -> Vec<f64> {
        unscale(y, &self.s_y)
    }

    fn terminal_args(&self, xf: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.inner.dims();
        (unscale(xf, &self.s_x), unscale(p, &self.s_y[d.p_range()]))
    }
}

impl ProblemFunctions for ScaledFunctions {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn dynamics(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        scale_vec(self.inner.dynamics(t, &self.y(y), g), &self.s_x)
    }

    fn dynamics_jacobian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let j = self.inner.dynamics_jacobian(t, &self.y(y), g);
        scale_rows_cols(j, &self.s_x, &self.inv_w)
    }

    fn dynamics_hessian(&self, t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let w: Vec<f64> = weights.iter().zip(&self.s_x).map(|(a, b)| a * b).collect();
        let h = self.inner.dynamics_hessian(t, &self.y(y), g, &w);
        scale_rows_cols(h, &self.inv_w, &self.inv_w)
    }

    fn running_cost(&self, t: f64, y: &[f64], g: &[f64]) -> f64 {
        self.inner.running_cost(t, &self.y(y), g)
    }

    fn running_cost_gradient(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        scale_vec(self.inner.running_cost_gradient(t, &self.y(y), g), &self.inv_w)
    }

    fn running_cost_hessian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let h = self.inner.running_cost_hessian(t, &self.y(y), g);
        scale_rows_cols(h, &self.inv_w, &self.inv_w)
    }

    fn terminal_cost(&self, xf: &[f64], p: &[f64]) -> f64 {
        let (x, q) = self.terminal_args(xf, p);
        self.inner.terminal_cost(&x, &q)
    }

    fn terminal_cost_gradient(&self, xf: &[f64], p: &[f64]) -> DVector<f64> {
        let (x, q) = self.terminal_args(xf, p);
        scale_vec(self.inner.terminal_cost_gradient(&x, &q), &self.inv_terminal)
    }

    fn terminal_cost_hessian(&self, xf: &[f64], p: &[f64]) -> DMatrix<f64> {
        let (x, q) = self.terminal_args(xf, p);
        let h = self.inner.terminal_cost_hessian(&x, &q);
        scale_rows_cols(h, &self.inv_terminal, &self.inv_terminal)
    }

    fn second_derivatives(&self) -> DerivativeSource {
        self.inner.second_derivatives()
    }
}

/// Component function in scaled arguments, `g̃(t, ỹ) = g(t, ỹ / s)`.
pub struct ScaledComponent {
    inner: Arc<dyn ComponentFunction>,
    s_y: Vec<f64>,
    inv: Vec<f64>,
    ones_g: Vec<f64>,
}

impl ScaledComponent {
    pub fn new(inner: Arc<dyn ComponentFunction>, s_y: Vec<f64>) -> Self {
        assert_eq!(s_y.len(), inner.n_y());
        let inv = s_y.iter().map(|s| 1.0 / s).collect();
        let ones_g = vec![1.0; inner.n_g()];
        Self { inner, s_y, inv, ones_g }
    }
}

impl ComponentFunction for ScaledComponent {
    fn n_g(&self) -> usize {
        self.inner.n_g()
    }

    fn n_y(&self) -> usize {
        self.inner.n_y()
    }

    fn value(&self, t: f64, y: &[f64]) -> DVector<f64> {
        self.inner.value(t, &unscale(y, &self.s_y))
    }

    fn jacobian(&self, t: f64, y: &[f64]) -> DMatrix<f64> {
        scale_rows_cols(self.inner.jacobian(t, &unscale(y, &self.s_y)), &self.ones_g, &self.inv)
    }

    fn hessians(&self, t: f64, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.inner
            .hessians(t, &unscale(y, &self.s_y))
            .into_iter()
            .map(|h| scale_rows_cols(h, &self.inv, &self.inv))
            .collect()
    }
}

/// Quantity of interest in scaled arguments.
pub struct ScaledQoi {
    inner: Arc<dyn Qoi>,
    s_y: Vec<f64>,
    dims: Dims,
    inv_w: Vec<f64>,
    inv_terminal: Vec<f64>,
}

impl ScaledQoi {
    pub fn new(inner: Arc<dyn Qoi>, s_y: Vec<f64>, dims: Dims) -> Self {
        let mut inv_w: Vec<f64> = s_y.iter().map(|s| 1.0 / s).collect();
        inv_w.extend(std::iter::repeat_n(1.0, dims.n_g));
        let inv_terminal = dims.x_range().chain(dims.p_range()).map(|i| 1.0 / s_y[i]).collect();
        Self { inner, s_y, dims, inv_w, inv_terminal }
    }

    fn terminal_args(&self, xf: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (unscale(xf, &self.s_y[self.dims.x_range()]), unscale(p, &self.s_y[self.dims.p_range()]))
    }
}

impl Qoi for ScaledQoi {
    fn terminal(&self, xf: &[f64], p: &[f64]) -> f64 {
        let (x, q) = self.terminal_args(xf, p);
        self.inner.terminal(&x, &q)
    }

    fn terminal_gradient(&self, xf: &[f64], p: &[f64]) -> DVector<f64> {
        let (x, q) = self.terminal_args(xf, p);
        scale_vec(self.inner.terminal_gradient(&x, &q), &self.inv_terminal)
    }

    fn running(&self, t: f64, y: &[f64], g: &[f64]) -> f64 {
        self.inner.running(t, &unscale(y, &self.s_y), g)
    }

    fn running_gradient(&self, t: f64, y: &[f64], g: &[f64]) -> Option<DVector<f64>> {
        self.inner
            .running_gradient(t, &unscale(y, &self.s_y), g)
            .map(|v| scale_vec(v, &self.inv_w))
    }
}

/// Replaces analytic second derivatives with central differences of the
/// analytic first derivatives. Usable for solving; the sensitivity assembly
/// rejects it.
pub struct FiniteDifferenceHessian {
    inner: Arc<dyn ProblemFunctions>,
    step: f64,
}

impl FiniteDifferenceHessian {
    pub fn new(inner: Arc<dyn ProblemFunctions>) -> Self {
        Self { inner, step: 1e-6 }
    }

    fn differentiate<F>(&self, y: &[f64], g: &[f64], grad: F) -> DMatrix<f64>
    where
        F: Fn(&[f64], &[f64]) -> DVector<f64>,
    {
        let d = self.inner.dims();
        let n_y = d.n_y();
        let n = d.n_w();
        let mut w = [y, g].concat();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let orig = w[j];
            let step = self.step * orig.abs().max(1.0);
            w[j] = orig + step;
            let plus = grad(&w[..n_y], &w[n_y..]);
            w[j] = orig - step;
            let minus = grad(&w[..n_y], &w[n_y..]);
            w[j] = orig;
            h.set_column(j, &((plus - minus) / (2.0 * step)));
        }
        (&h + h.transpose()) * 0.5
    }
}

impl ProblemFunctions for FiniteDifferenceHessian {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn dynamics(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        self.inner.dynamics(t, y, g)
    }

    fn dynamics_jacobian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        self.inner.dynamics_jacobian(t, y, g)
    }

    fn dynamics_hessian(&self, t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let mu = DVector::from_column_slice(weights);
        self.differentiate(y, g, |yy, gg| self.inner.dynamics_jacobian(t, yy, gg).tr_mul(&mu))
    }

    fn running_cost(&self, t: f64, y: &[f64], g: &[f64]) -> f64 {
        self.inner.running_cost(t, y, g)
    }

    fn running_cost_gradient(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        self.inner.running_cost_gradient(t, y, g)
    }

    fn running_cost_hessian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        self.differentiate(y, g, |yy, gg| self.inner.running_cost_gradient(t, yy, gg))
    }

    fn terminal_cost(&self, xf: &[f64], p: &[f64]) -> f64 {
        self.inner.terminal_cost(xf, p)
    }

    fn terminal_cost_gradient(&self, xf: &[f64], p: &[f64]) -> DVector<f64> {
        self.inner.terminal_cost_gradient(xf, p)
    }

    fn terminal_cost_hessian(&self, xf: &[f64], p: &[f64]) -> DMatrix<f64> {
        self.inner.terminal_cost_hessian(xf, p)
    }

    fn second_derivatives(&self) -> DerivativeSource {
        DerivativeSource::FiniteDifference
    }
}
