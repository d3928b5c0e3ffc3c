use nalgebra::{DMatrix, DVector};

use super::{ComponentFunction, Dims};

/// Value, Jacobian and (optionally) Hessians of `g` at one point.
#[derive(Debug, Clone)]
pub struct ComponentEval {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub hessians: Option<Vec<DMatrix<f64>>>,
}

impl ComponentEval {
    pub fn at(g: &dyn ComponentFunction, t: f64, y: &[f64], with_hessians: bool) -> Self {
        Self {
            value: g.value(t, y),
            jacobian: g.jacobian(t, y),
            hessians: with_hessians.then(|| g.hessians(t, y)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().chain(self.jacobian.iter()).all(|v| v.is_finite())
            && self
                .hessians
                .as_ref()
                .is_none_or(|hs| hs.iter().all(|h| h.iter().all(|v| v.is_finite())))
    }
}

/// `f_y + f_g g_y` for a Jacobian `f_w` taken with `g` independent.
pub fn composed_jacobian(f_w: &DMatrix<f64>, g_y: &DMatrix<f64>, dims: Dims) -> DMatrix<f64> {
    let n_y = dims.n_y();
    f_w.columns(0, n_y) + f_w.columns(n_y, dims.n_g) * g_y
}

/// `∇_y l + g_yᵀ ∇_g l`.
pub fn composed_gradient(l_w: &DVector<f64>, g_y: &DMatrix<f64>, dims: Dims) -> DVector<f64> {
    let n_y = dims.n_y();
    l_w.rows(0, n_y) + g_y.transpose() * l_w.rows(n_y, dims.n_g)
}

/// Full second derivative in `y` of `w ↦ F(y, g(y))` given the partial
/// Hessian `m = ∇²_ww F` and the partial gradient `grad_g = ∇_g F`:
///
/// ```text
/// F_yy + F_yg g_y + (F_yg g_y)ᵀ + g_yᵀ F_gg g_y + Σ_i (∇_g F)_i ∇²_yy g_i
/// ```
pub fn composed_hessian(
    m: &DMatrix<f64>,
    grad_g: &DVector<f64>,
    g_y: &DMatrix<f64>,
    g_hess: &[DMatrix<f64>],
    dims: Dims,
) -> DMatrix<f64> {
    let n_y = dims.n_y();
    let n_g = dims.n_g;
    let m_yy = m.view((0, 0), (n_y, n_y));
    let m_yg = m.view((0, n_y), (n_y, n_g));
    let m_gg = m.view((n_y, n_y), (n_g, n_g));
    let cross = m_yg * g_y;
    let mut h = m_yy + &cross + cross.transpose() + g_y.transpose() * m_gg * g_y;
    for (i, gh) in g_hess.iter().enumerate() {
        if grad_g[i] != 0.0 {
            h += gh * grad_g[i];
        }
    }
    h
}

/// `F_yg + g_yᵀ F_gg`, the derivative of `∇_y F(y, g(y))` with respect to the
/// value of `g`.
pub fn mixed_g_block(m: &DMatrix<f64>, g_y: &DMatrix<f64>, dims: Dims) -> DMatrix<f64> {
    let n_y = dims.n_y();
    let n_g = dims.n_g;
    m.view((0, n_y), (n_y, n_g)) + g_y.transpose() * m.view((n_y, n_y), (n_g, n_g))
}
