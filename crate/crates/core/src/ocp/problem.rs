use std::sync::Arc;

use nalgebra::DVector;

use super::{
    ComponentFunction, DerivativeSource, Dims, OcpError, ProblemFunctions, Qoi, ScaledComponent,
    ScaledFunctions, ScaledQoi,
};

/// Time domain of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed { t0: f64, tf: f64 },
    /// Normalized time `τ ∈ [0, 1]`; the physical duration is parameter
    /// `p[duration_index]`. The problem functions are expected to already
    /// carry the duration factor (see [`super::TimeNormalized`]).
    Normalized { duration_index: usize },
}

impl Horizon {
    /// Interval on which the problem is posed (and discretized).
    pub fn interval(&self) -> (f64, f64) {
        match *self {
            Horizon::Fixed { t0, tf } => (t0, tf),
            Horizon::Normalized { .. } => (0.0, 1.0),
        }
    }
}

/// Elementwise box constraints. Absent bounds are `±∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
}

impl Bounds {
    pub fn none(dims: Dims) -> Self {
        let inf = f64::INFINITY;
        Self {
            x_lower: vec![-inf; dims.n_x],
            x_upper: vec![inf; dims.n_x],
            u_lower: vec![-inf; dims.n_u],
            u_upper: vec![inf; dims.n_u],
            p_lower: vec![-inf; dims.n_p],
            p_upper: vec![inf; dims.n_p],
        }
    }

    pub fn is_unbounded(&self) -> bool {
        let all = |v: &[f64], s: f64| v.iter().all(|&b| b == s * f64::INFINITY);
        all(&self.x_lower, -1.0)
            && all(&self.u_lower, -1.0)
            && all(&self.p_lower, -1.0)
            && all(&self.x_upper, 1.0)
            && all(&self.u_upper, 1.0)
            && all(&self.p_upper, 1.0)
    }

    /// Lower and upper bounds on the packed `y`.
    pub fn y_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = [&self.x_lower[..], &self.u_lower, &self.p_lower].concat();
        let hi = [&self.x_upper[..], &self.u_upper, &self.p_upper].concat();
        (lo, hi)
    }

    fn validate(&self, dims: Dims) -> Result<(), OcpError> {
        let pairs: [(&'static str, &[f64], &[f64], usize); 3] = [
            ("state bounds", &self.x_lower, &self.x_upper, dims.n_x),
            ("control bounds", &self.u_lower, &self.u_upper, dims.n_u),
            ("parameter bounds", &self.p_lower, &self.p_upper, dims.n_p),
        ];
        for (what, lo, hi, n) in pairs {
            for v in [lo, hi] {
                if v.len() != n {
                    return Err(OcpError::DimensionMismatch { what, expected: n, got: v.len() });
                }
            }
            for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
                if l.is_nan() || h.is_nan() || l > h {
                    return Err(OcpError::InvalidProblem(format!(
                        "{what}: entry {i} has lower {l} > upper {h}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn scaled(&self, s_y: &[f64], dims: Dims) -> Self {
        let mul = |v: &[f64], s: &[f64]| v.iter().zip(s).map(|(a, b)| a * b).collect::<Vec<_>>();
        let (sx, su, sp) = (&s_y[dims.x_range()], &s_y[dims.u_range()], &s_y[dims.p_range()]);
        Self {
            x_lower: mul(&self.x_lower, sx),
            x_upper: mul(&self.x_upper, sx),
            u_lower: mul(&self.u_lower, su),
            u_upper: mul(&self.u_upper, su),
            p_lower: mul(&self.p_lower, sp),
            p_upper: mul(&self.p_upper, sp),
        }
    }
}

/// A Bolza optimal control problem with an attached component function.
#[derive(Clone)]
pub struct OcpProblem {
    pub dims: Dims,
    pub horizon: Horizon,
    pub x0: Vec<f64>,
    pub funcs: Arc<dyn ProblemFunctions>,
    pub g: Arc<dyn ComponentFunction>,
    pub bounds: Bounds,
    pub qoi: Option<Arc<dyn Qoi>>,
}

impl std::fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpProblem")
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("bounds", &self.bounds)
            .field("has_qoi", &self.qoi.is_some())
            .finish()
    }
}

impl OcpProblem {
    pub fn new(
        horizon: Horizon,
        x0: Vec<f64>,
        funcs: Arc<dyn ProblemFunctions>,
        g: Arc<dyn ComponentFunction>,
    ) -> Result<Self, OcpError> {
        let dims = funcs.dims();
        let prob = Self { dims, horizon, x0, bounds: Bounds::none(dims), funcs, g, qoi: None };
        prob.validate()?;
        Ok(prob)
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self, OcpError> {
        self.bounds = bounds;
        self.validate()?;
        Ok(self)
    }

    pub fn with_qoi(mut self, qoi: Arc<dyn Qoi>) -> Self {
        self.qoi = Some(qoi);
        self
    }

    /// Same problem with a different component function.
    pub fn with_component(&self, g: Arc<dyn ComponentFunction>) -> Result<Self, OcpError> {
        let mut out = self.clone();
        out.g = g;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let d = self.dims;
        Dims::new(d.n_x, d.n_u, d.n_p, d.n_g)?;
        if self.g.n_g() != d.n_g {
            return Err(OcpError::DimensionMismatch {
                what: "component function outputs",
                expected: d.n_g,
                got: self.g.n_g(),
            });
        }
        if self.g.n_y() != d.n_y() {
            return Err(OcpError::DimensionMismatch {
                what: "component function arguments",
                expected: d.n_y(),
                got: self.g.n_y(),
            });
        }
        if self.x0.len() != d.n_x {
            return Err(OcpError::DimensionMismatch {
                what: "initial state",
                expected: d.n_x,
                got: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(OcpError::InvalidProblem("initial state is not finite".into()));
        }
        self.bounds.validate(d)?;
        match self.horizon {
            Horizon::Fixed { t0, tf } => {
                if !(t0.is_finite() && tf.is_finite() && t0 < tf) {
                    return Err(OcpError::InvalidProblem(format!(
                        "horizon [{t0}, {tf}] is not a proper interval"
                    )));
                }
            }
            Horizon::Normalized { duration_index } => {
                if duration_index >= d.n_p {
                    return Err(OcpError::InvalidProblem(format!(
                        "duration index {duration_index} out of range for {} parameters",
                        d.n_p
                    )));
                }
                if self.bounds.p_upper[duration_index] <= 0.0 {
                    return Err(OcpError::InvalidProblem(
                        "the duration of a normalized-time problem must be allowed to be positive"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn interval(&self) -> (f64, f64) {
        self.horizon.interval()
    }

    pub fn second_derivatives(&self) -> DerivativeSource {
        self.funcs.second_derivatives()
    }

    /// Rescale the problem to `ỹ = s_y ⊙ y`. Bounds, initial state, model
    /// functions, the component function and the QoI are all transformed so
    /// that the scaled problem's solution is `s_y ⊙` the original one.
    pub fn scaled(&self, s_y: &[f64]) -> Result<Self, OcpError> {
        let d = self.dims;
        if s_y.len() != d.n_y() {
            return Err(OcpError::DimensionMismatch {
                what: "scale vector",
                expected: d.n_y(),
                got: s_y.len(),
            });
        }
        if s_y.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(OcpError::InvalidProblem("scale factors must be positive".into()));
        }
        let funcs: Arc<dyn ProblemFunctions> =
            Arc::new(ScaledFunctions::new(self.funcs.clone(), s_y.to_vec()));
        let g: Arc<dyn ComponentFunction> =
            Arc::new(ScaledComponent::new(self.g.clone(), s_y.to_vec()));
        let qoi = self.qoi.clone().map(|q| {
            Arc::new(ScaledQoi::new(q, s_y.to_vec(), d)) as Arc<dyn Qoi>
        });
        let x0 = self.x0.iter().zip(&s_y[d.x_range()]).map(|(a, s)| a * s).collect();
        let out = Self {
            dims: d,
            horizon: self.horizon,
            x0,
            funcs,
            g,
            bounds: self.bounds.scaled(s_y, d),
            qoi,
        };
        out.validate()?;
        Ok(out)
    }
}

/// `f(t, y, g(t, y))` with a finiteness check.
pub fn eval_composed_dynamics(prob: &OcpProblem, t: f64, y: &[f64]) -> Result<DVector<f64>, OcpError> {
    let d = prob.dims;
    if y.len() != d.n_y() {
        return Err(OcpError::DimensionMismatch { what: "y", expected: d.n_y(), got: y.len() });
    }
    let (t0, tf) = prob.interval();
    if !(t >= t0 && t <= tf) {
        return Err(OcpError::OutsideHorizon { t, t0, tf });
    }
    let err = || OcpError::ModelEvaluation { t, y: y.to_vec() };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(err());
    }
    let g = prob.g.value(t, y);
    let f = prob.funcs.dynamics(t, y, g.as_slice());
    if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(err());
    }
    Ok(f)
}
