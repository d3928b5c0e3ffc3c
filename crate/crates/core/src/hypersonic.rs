//! Longitudinal glide of a notional hypersonic vehicle with flap control.
//!
//! State `x = (x₁, x₂, v, γ, α, q)` (downrange, altitude, speed, flight path
//! angle, angle of attack, pitch rate), control `u = δ` (flap deflection),
//! parameter `p = T` (flight duration). The component function is the
//! aerodynamic coefficient triple `g = (C_L, C_D, C_M)(α, δ)`.
//!
//! Problems are built in SI units on normalized time `τ ∈ [0, 1]` and can be
//! rescaled to kg/km/s with [`unit_scaling`].

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual64, DualNum, HyperDual64};
use thiserror::Error;

use crate::collocation::{CollocationError, CollocationGrid, CollocationSolution, Transcription};
use crate::nlp::SolverConfig;
use crate::ocp::{
    Bounds, ComponentFunction, Dims, Horizon, OcpError, OcpProblem, ProblemFunctions, Qoi, TimeNormalized,
};

pub const N_X: usize = 6;
pub const N_Y: usize = 8;
const ALPHA: usize = 4;
const DELTA: usize = 6;
const DURATION: usize = 7;

/// Initial guess for the flight duration of the max-downrange solve.
pub const DURATION_GUESS: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum HypersonicError {
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("unknown unit scheme `{0}` (expected `si` or `kgkms`)")]
    UnknownScheme(String),
    #[error("reference is incompatible: {0}")]
    IncompatibleReference(String),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Problem(#[from] OcpError),
    #[error(transparent)]
    Collocation(#[from] CollocationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Pitch moment of inertia, kg·m².
    pub inertia: f64,
    /// Reference area, m².
    pub area: f64,
    /// Reference length, m.
    pub length: f64,
    /// Gravitational parameter, m³/s².
    pub mu: f64,
    /// m
    pub earth_radius: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { mass: 1000.0, inertia: 247.0, area: 4.4, length: 3.6, mu: 3.986e14, earth_radius: 6.371e6 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), HypersonicError> {
        let all = [self.mass, self.inertia, self.area, self.length, self.mu, self.earth_radius];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(HypersonicError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Aerodynamic coefficient model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AeroModel {
    Surrogate,
    /// Surrogate with `C_L, C_D, C_M` scaled by `(1+ε), (1−ε), (1+ε)`.
    Truth { eps: f64 },
}

impl AeroModel {
    fn factors(self) -> [f64; 3] {
        match self {
            AeroModel::Surrogate => [1.0; 3],
            AeroModel::Truth { eps } => [1.0 + eps, 1.0 - eps, 1.0 + eps],
        }
    }
}

const CL: [f64; 3] = [-0.04, 0.8, 0.13];
// constant, α, α², δ, δ²
const CD: [f64; 5] = [0.012, -0.01, 0.6, -0.02, 0.12];
const CM: [f64; 3] = [0.1745, -1.0, -1.0];

/// Coefficients `(C_L, C_D, C_M)` with first and second partials in `(α, δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroCoefficients {
    pub value: [f64; 3],
    pub d_alpha: [f64; 3],
    pub d_delta: [f64; 3],
    pub d_alpha2: [f64; 3],
    pub d_delta2: [f64; 3],
}

pub fn aero_coeffs(model: AeroModel, alpha: f64, delta: f64) -> AeroCoefficients {
    let [kl, kd, km] = model.factors();
    let value = [
        kl * (CL[0] + CL[1] * alpha + CL[2] * delta),
        kd * (CD[0] + CD[1] * alpha + CD[2] * alpha * alpha + CD[3] * delta + CD[4] * delta * delta),
        km * (CM[0] + CM[1] * alpha + CM[2] * delta),
    ];
    AeroCoefficients {
        value,
        d_alpha: [kl * CL[1], kd * (CD[1] + 2.0 * CD[2] * alpha), km * CM[1]],
        d_delta: [kl * CL[2], kd * (CD[3] + 2.0 * CD[4] * delta), km * CM[2]],
        d_alpha2: [0.0, kd * 2.0 * CD[2], 0.0],
        d_delta2: [0.0, kd * 2.0 * CD[4], 0.0],
    }
}

/// `g(y) = (C_L, C_D, C_M)(α, δ)` on the packed `y = (x, δ, T)`.
#[derive(Debug, Clone, Copy)]
pub struct AeroComponent {
    pub model: AeroModel,
}

impl ComponentFunction for AeroComponent {
    fn n_g(&self) -> usize {
        3
    }

    fn n_y(&self) -> usize {
        N_Y
    }

    fn value(&self, _t: f64, y: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(&aero_coeffs(self.model, y[ALPHA], y[DELTA]).value)
    }

    fn jacobian(&self, _t: f64, y: &[f64]) -> DMatrix<f64> {
        let c = aero_coeffs(self.model, y[ALPHA], y[DELTA]);
        let mut j = DMatrix::zeros(3, N_Y);
        for i in 0..3 {
            j[(i, ALPHA)] = c.d_alpha[i];
            j[(i, DELTA)] = c.d_delta[i];
        }
        j
    }

    fn hessians(&self, _t: f64, y: &[f64]) -> Vec<DMatrix<f64>> {
        let c = aero_coeffs(self.model, y[ALPHA], y[DELTA]);
        (0..3)
            .map(|i| {
                let mut h = DMatrix::zeros(N_Y, N_Y);
                h[(ALPHA, ALPHA)] = c.d_alpha2[i];
                h[(DELTA, DELTA)] = c.d_delta2[i];
                h
            })
            .collect()
    }
}

/// Equations of motion in physical time on `w = (x, δ, T, C_L, C_D, C_M)`.
fn rhs<D: DualNum<Primitive = f64> + Copy>(p: &VehicleParams, w: &[D]) -> [D; N_X] {
    let (x2, v, gamma, q) = (w[1], w[2], w[3], w[5]);
    let (cl, cd, cm) = (w[8], w[9], w[10]);
    let rho = (x2 * -1.4e-4).exp() * 1.225;
    let qbar = rho * v * v * 0.5;
    let lift = qbar * cl * p.area;
    let drag = qbar * cd * p.area;
    let moment = qbar * cm * p.area * p.length;
    let r = x2 + p.earth_radius;
    let grav = (r * r).recip() * p.mu;
    let (s, c) = (gamma.sin(), gamma.cos());
    let gamma_dot = (lift - grav * c * p.mass + v * v * c * p.mass / r) / (v * p.mass);
    [
        v * c,
        v * s,
        -(drag + grav * s * p.mass) / p.mass,
        gamma_dot,
        q - gamma_dot,
        moment / p.inertia,
    ]
}

/// Atmospheric density, kg/m³.
pub fn density(altitude: f64) -> f64 {
    1.225 * (-1.4e-4 * altitude).exp()
}

/// Right-hand side of the equations of motion at `x` with flap `δ`.
pub fn hypersonic_dynamics(
    params: &VehicleParams,
    model: AeroModel,
    x: &[f64; N_X],
    delta: f64,
) -> Result<[f64; N_X], HypersonicError> {
    if !(x[2] > 0.0) {
        return Err(HypersonicError::NonPositiveSpeed(x[2]));
    }
    let c = aero_coeffs(model, x[ALPHA], delta).value;
    let mut w = [0.0; N_Y + 3];
    w[..N_X].copy_from_slice(x);
    w[DELTA] = delta;
    w[N_Y..].copy_from_slice(&c);
    Ok(rhs(params, &w))
}

/// Weights of the reference-tracking objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingWeights {
    pub q: [f64; N_X],
    pub r_u: f64,
    pub r_p: f64,
    /// State deviations are converted by these factors before weighting
    /// (km for lengths and speed).
    pub state_units: [f64; N_X],
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self {
            q: [1e-3, 1e1, 0.0, 0.0, 1e1, 0.0],
            r_u: 1e8,
            r_p: 1e-3,
            state_units: [1e-3, 1e-3, 1e-3, 1.0, 1.0, 1.0],
        }
    }
}

/// Reference trajectory on normalized time, stored in SI units together
/// with the collocation grid it was computed on.
#[derive(Debug, Clone)]
pub struct Reference {
    pub grid: CollocationGrid,
    pub x_points: Vec<Vec<f64>>,
    pub u_nodes: Vec<Vec<f64>>,
    pub duration: f64,
}

impl Reference {
    pub fn new(
        grid: CollocationGrid,
        x_points: Vec<Vec<f64>>,
        u_nodes: Vec<Vec<f64>>,
        duration: f64,
    ) -> Result<Self, HypersonicError> {
        if x_points.len() != grid.num_points() || u_nodes.len() != grid.num_nodes() {
            return Err(HypersonicError::IncompatibleReference(format!(
                "{} state samples and {} control samples for a grid with {} points and {} nodes",
                x_points.len(),
                u_nodes.len(),
                grid.num_points(),
                grid.num_nodes()
            )));
        }
        if x_points.iter().any(|x| x.len() != N_X) || u_nodes.iter().any(|u| u.len() != 1) {
            return Err(HypersonicError::IncompatibleReference("wrong sample sizes".into()));
        }
        let finite = x_points.iter().chain(&u_nodes).flatten().all(|v| v.is_finite());
        if !finite || !(duration.is_finite() && duration > 0.0) {
            return Err(HypersonicError::IncompatibleReference("non-finite samples or duration".into()));
        }
        Ok(Self { grid, x_points, u_nodes, duration })
    }

    /// Reference from a solution of a (possibly rescaled) hypersonic problem.
    pub fn from_solution(sol: &CollocationSolution, scaling: &UnitScaling) -> Result<Self, HypersonicError> {
        let x_points = sol.x_points().iter().map(|x| scaling.unscale_x(x)).collect();
        let u_nodes = sol.u_nodes().iter().map(|u| scaling.unscale_u(u)).collect();
        let duration = scaling.unscale_p(&sol.params())[0];
        Self::new(sol.grid().clone(), x_points, u_nodes, duration)
    }

    pub fn state_at(&self, tau: f64) -> Result<Vec<f64>, HypersonicError> {
        Ok(self.grid.interpolate_points(&self.x_points, tau)?)
    }

    pub fn control_at(&self, tau: f64) -> Result<Vec<f64>, HypersonicError> {
        Ok(self.grid.interpolate_nodes(&self.u_nodes, tau)?)
    }

    pub fn downrange(&self) -> f64 {
        self.x_points[self.x_points.len() - 1][0]
    }
}

#[derive(Debug, Clone)]
enum Cost {
    MaxDownrange,
    Tracking { reference: Arc<Reference>, weights: TrackingWeights },
}

/// Dynamics and objective in physical time; wrap with [`TimeNormalized`].
#[derive(Debug, Clone)]
struct VehicleFunctions {
    params: VehicleParams,
    cost: Cost,
}

const N_W: usize = N_Y + 3;

impl VehicleFunctions {
    fn w(y: &[f64], g: &[f64]) -> [f64; N_W] {
        let mut w = [0.0; N_W];
        w[..N_Y].copy_from_slice(y);
        w[N_Y..].copy_from_slice(g);
        w
    }

    /// Reference sample at `τ`; outside `[0, 1]` the evaluation is rejected
    /// upstream, so clamping only guards rounding.
    fn reference_at(reference: &Reference, tau: f64) -> (Vec<f64>, f64) {
        let s = tau.clamp(0.0, 1.0);
        let x = reference.state_at(s).expect("clamped position lies on the grid");
        let u = reference.control_at(s).expect("clamped position lies on the grid");
        (x, u[0])
    }
}

impl ProblemFunctions for VehicleFunctions {
    fn dims(&self) -> Dims {
        Dims { n_x: N_X, n_u: 1, n_p: 1, n_g: 3 }
    }

    fn dynamics(&self, _t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(&rhs(&self.params, &Self::w(y, g)))
    }

    fn dynamics_jacobian(&self, _t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let w = Self::w(y, g);
        let mut jac = DMatrix::zeros(N_X, N_W);
        let mut wd = w.map(Dual64::from_re);
        for j in 0..N_W {
            wd[j] = Dual64::new(w[j], 1.0);
            for (i, fi) in rhs(&self.params, &wd).iter().enumerate() {
                jac[(i, j)] = fi.eps;
            }
            wd[j] = Dual64::from_re(w[j]);
        }
        jac
    }

    fn dynamics_hessian(&self, _t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let w = Self::w(y, g);
        let mut h = DMatrix::zeros(N_W, N_W);
        let mut wd = w.map(HyperDual64::from_re);
        for a in 0..N_W {
            for b in 0..=a {
                wd[a].eps1 = 1.0;
                wd[b].eps2 = 1.0;
                let f = rhs(&self.params, &wd);
                let v: f64 = f.iter().zip(weights).map(|(fi, mu)| fi.eps1eps2 * mu).sum();
                h[(a, b)] = v;
                h[(b, a)] = v;
                wd[a] = HyperDual64::from_re(w[a]);
                wd[b] = HyperDual64::from_re(w[b]);
            }
        }
        h
    }

    fn running_cost(&self, t: f64, y: &[f64], _g: &[f64]) -> f64 {
        match &self.cost {
            Cost::MaxDownrange => 0.0,
            Cost::Tracking { reference, weights } => {
                let (xr, ur) = Self::reference_at(reference, t);
                let mut l = weights.r_u * (y[DELTA] - ur).powi(2);
                for i in 0..N_X {
                    l += weights.q[i] * (weights.state_units[i] * (y[i] - xr[i])).powi(2);
                }
                l
            }
        }
    }

    fn running_cost_gradient(&self, t: f64, y: &[f64], _g: &[f64]) -> DVector<f64> {
        let mut grad = DVector::zeros(N_W);
        if let Cost::Tracking { reference, weights } = &self.cost {
            let (xr, ur) = Self::reference_at(reference, t);
            for i in 0..N_X {
                grad[i] = 2.0 * weights.q[i] * weights.state_units[i].powi(2) * (y[i] - xr[i]);
            }
            grad[DELTA] = 2.0 * weights.r_u * (y[DELTA] - ur);
        }
        grad
    }

    fn running_cost_hessian(&self, _t: f64, _y: &[f64], _g: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(N_W, N_W);
        if let Cost::Tracking { weights, .. } = &self.cost {
            for i in 0..N_X {
                h[(i, i)] = 2.0 * weights.q[i] * weights.state_units[i].powi(2);
            }
            h[(DELTA, DELTA)] = 2.0 * weights.r_u;
        }
        h
    }

    fn terminal_cost(&self, xf: &[f64], p: &[f64]) -> f64 {
        match &self.cost {
            Cost::MaxDownrange => -xf[0] * 1e-3,
            Cost::Tracking { reference, weights } => weights.r_p * (p[0] - reference.duration).powi(2),
        }
    }

    fn terminal_cost_gradient(&self, _xf: &[f64], p: &[f64]) -> DVector<f64> {
        let mut grad = DVector::zeros(N_X + 1);
        match &self.cost {
            Cost::MaxDownrange => grad[0] = -1e-3,
            Cost::Tracking { reference, weights } => grad[N_X] = 2.0 * weights.r_p * (p[0] - reference.duration),
        }
        grad
    }

    fn terminal_cost_hessian(&self, _xf: &[f64], _p: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(N_X + 1, N_X + 1);
        if let Cost::Tracking { weights, .. } = &self.cost {
            h[(N_X, N_X)] = 2.0 * weights.r_p;
        }
        h
    }
}

/// Final downrange in km.
#[derive(Debug, Clone, Copy)]
pub struct DownrangeKm;

impl Qoi for DownrangeKm {
    fn terminal(&self, xf: &[f64], _p: &[f64]) -> f64 {
        xf[0] * 1e-3
    }

    fn terminal_gradient(&self, _xf: &[f64], _p: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(N_X + 1);
        g[0] = 1e-3;
        g
    }
}

pub fn initial_state() -> Vec<f64> {
    let deg = std::f64::consts::PI / 180.0;
    vec![0.0, 80000.0, 5000.0, -5.0 * deg, 11.0 * deg, 0.0]
}

pub fn box_bounds() -> Bounds {
    let deg = std::f64::consts::PI / 180.0;
    let inf = f64::INFINITY;
    Bounds {
        x_lower: vec![-inf, 0.0, 1.0, -30.0 * deg, 0.0, -inf],
        x_upper: vec![inf, 81000.0, 6000.0, 30.0 * deg, 20.0 * deg, inf],
        u_lower: vec![-20.0 * deg],
        u_upper: vec![20.0 * deg],
        p_lower: vec![1000.0],
        p_upper: vec![3000.0],
    }
}

fn normalized(params: &VehicleParams, cost: Cost, model: AeroModel) -> Result<OcpProblem, HypersonicError> {
    params.validate()?;
    let funcs = VehicleFunctions { params: *params, cost };
    // The tracking integrand is compared in normalized time, so only the
    // dynamics carry the duration factor.
    let funcs = Arc::new(TimeNormalized::new(Arc::new(funcs), 0, false));
    let prob = OcpProblem::new(
        Horizon::Normalized { duration_index: 0 },
        initial_state(),
        funcs,
        Arc::new(AeroComponent { model }),
    )?;
    Ok(prob.with_qoi(Arc::new(DownrangeKm)))
}

/// Maximize final downrange (objective `−x₁(T)` in km) subject to the box
/// constraints.
pub fn build_max_downrange(params: &VehicleParams, model: AeroModel) -> Result<OcpProblem, HypersonicError> {
    Ok(normalized(params, Cost::MaxDownrange, model)?.with_bounds(box_bounds())?)
}

/// Track `reference` without inequality constraints.
pub fn build_tracking(
    params: &VehicleParams,
    model: AeroModel,
    reference: Arc<Reference>,
    weights: TrackingWeights,
) -> Result<OcpProblem, HypersonicError> {
    normalized(params, Cost::Tracking { reference, weights }, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitScheme {
    Si,
    KgKmS,
}

impl FromStr for UnitScheme {
    type Err = HypersonicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "si" => Ok(UnitScheme::Si),
            "kgkms" => Ok(UnitScheme::KgKmS),
            other => Err(HypersonicError::UnknownScheme(other.to_string())),
        }
    }
}

impl std::fmt::Display for UnitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnitScheme::Si => "si",
            UnitScheme::KgKmS => "kgkms",
        })
    }
}

/// Map between SI variables `y` and solver variables `s ⊙ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitScaling {
    pub scheme: UnitScheme,
    pub s_y: [f64; N_Y],
}

impl UnitScaling {
    pub fn new(scheme: UnitScheme) -> Self {
        let s_y = match scheme {
            UnitScheme::Si => [1.0; N_Y],
            UnitScheme::KgKmS => [1e-3, 1e-3, 1e-3, 1.0, 1.0, 1.0, 1.0, 1.0],
        };
        Self { scheme, s_y }
    }

    fn map(v: &[f64], s: &[f64], forward: bool) -> Vec<f64> {
        v.iter().zip(s).map(|(a, b)| if forward { a * b } else { a / b }).collect()
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        Self::map(x, &self.s_y[..N_X], true)
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        Self::map(x, &self.s_y[..N_X], false)
    }

    pub fn scale_u(&self, u: &[f64]) -> Vec<f64> {
        Self::map(u, &self.s_y[N_X..DURATION], true)
    }

    pub fn unscale_u(&self, u: &[f64]) -> Vec<f64> {
        Self::map(u, &self.s_y[N_X..DURATION], false)
    }

    pub fn scale_p(&self, p: &[f64]) -> Vec<f64> {
        Self::map(p, &self.s_y[DURATION..], true)
    }

    pub fn unscale_p(&self, p: &[f64]) -> Vec<f64> {
        Self::map(p, &self.s_y[DURATION..], false)
    }

    /// State in reporting units (kg/km/s, radians) from SI.
    pub fn report_x(x: &[f64]) -> Vec<f64> {
        UnitScaling::new(UnitScheme::KgKmS).scale_x(x)
    }
}

/// Rescale an SI hypersonic problem to `scheme`.
pub fn unit_scaling(problem: &OcpProblem, scheme: UnitScheme) -> Result<(OcpProblem, UnitScaling), HypersonicError> {
    let scaling = UnitScaling::new(scheme);
    let scaled = match scheme {
        UnitScheme::Si => problem.clone(),
        UnitScheme::KgKmS => problem.scaled(&scaling.s_y)?,
    };
    Ok((scaled, scaling))
}

/// Trimmed glide from the initial condition: `α` held at its initial value
/// with the flap at the moment trim (`C_M = 0`), pitch rate following `γ'`,
/// point-mass states integrated by RK4 over [`DURATION_GUESS`] seconds.
/// Stored on a uniform grid in normalized time, SI units.
#[derive(Debug, Clone)]
pub struct GlideGuess {
    states: Vec<[f64; N_X]>,
    pub delta: f64,
    pub duration: f64,
}

impl GlideGuess {
    pub fn new(params: &VehicleParams, model: AeroModel, steps: usize) -> Result<Self, HypersonicError> {
        let x0: [f64; N_X] = initial_state().try_into().expect("six states");
        let alpha = x0[ALPHA];
        // C_M is linear in δ for every model; solve C_M(α, δ) = 0.
        let c = aero_coeffs(model, alpha, 0.0);
        let delta = -c.value[2] / c.d_delta[2];
        let h = DURATION_GUESS / steps as f64;
        let rate = |x: &[f64; N_X]| -> Result<[f64; N_X], HypersonicError> {
            let mut f = hypersonic_dynamics(params, model, x, delta)?;
            f[ALPHA] = 0.0;
            f[5] = 0.0;
            Ok(f)
        };
        let with_pitch_rate = |mut x: [f64; N_X]| -> Result<[f64; N_X], HypersonicError> {
            x[5] = 0.0;
            x[5] = hypersonic_dynamics(params, model, &x, delta)?[3];
            Ok(x)
        };
        let mut x = x0;
        let mut states = vec![x0];
        for _ in 0..steps {
            let axpy = |a: &[f64; N_X], s: f64, b: &[f64; N_X]| -> [f64; N_X] { std::array::from_fn(|i| a[i] + s * b[i]) };
            let k1 = rate(&x)?;
            let k2 = rate(&axpy(&x, h / 2.0, &k1))?;
            let k3 = rate(&axpy(&x, h / 2.0, &k2))?;
            let k4 = rate(&axpy(&x, h, &k3))?;
            x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            states.push(with_pitch_rate(x)?);
        }
        Ok(Self { states, delta, duration: DURATION_GUESS })
    }

    /// Linear interpolation at `τ ∈ [0, 1]`; the initial state is returned
    /// exactly at `τ = 0`.
    pub fn at(&self, tau: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.states.len() - 1;
        let s = tau.clamp(0.0, 1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let mut x: Vec<f64> = (0..N_X).map(|j| a[j] + w * (b[j] - a[j])).collect();
        if tau <= 0.0 {
            x = initial_state();
        }
        (x, vec![self.delta])
    }
}

/// Solve the max-downrange problem from the trimmed glide guess.
pub fn solve_max_downrange(
    params: &VehicleParams,
    model: AeroModel,
    grid: CollocationGrid,
    scheme: UnitScheme,
    config: &SolverConfig,
) -> Result<(CollocationSolution, UnitScaling), HypersonicError> {
    let (prob, scaling) = unit_scaling(&build_max_downrange(params, model)?, scheme)?;
    let tr = Transcription::new(prob, grid)?;
    let guess = GlideGuess::new(params, model, 4000)?;
    let z0 = tr.pack_fn(
        |tau| {
            let (x, u) = guess.at(tau);
            (scaling.scale_x(&x), scaling.scale_u(&u))
        },
        &scaling.scale_p(&[DURATION_GUESS]),
    )?;
    Ok((tr.solve(&z0, config)?, scaling))
}

/// Solve the tracking problem for `model`, warm-started at the reference.
pub fn solve_tracking(
    params: &VehicleParams,
    model: AeroModel,
    reference: Arc<Reference>,
    grid: CollocationGrid,
    scheme: UnitScheme,
    config: &SolverConfig,
) -> Result<(CollocationSolution, UnitScaling), HypersonicError> {
    let prob = build_tracking(params, model, reference.clone(), TrackingWeights::default())?;
    let (prob, scaling) = unit_scaling(&prob, scheme)?;
    let tr = Transcription::new(prob, grid)?;
    let z0 = tr.pack_fn(
        |tau| {
            let x = reference.state_at(tau).expect("grid positions lie in [0, 1]");
            let u = reference.control_at(tau).expect("grid positions lie in [0, 1]");
            (scaling.scale_x(&x), scaling.scale_u(&u))
        },
        &scaling.scale_p(&[reference.duration]),
    );
    Ok((tr.solve(&z0?, config)?, scaling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::derivcheck::check_model;

    #[test]
    fn coefficients_at_zero_are_constant_terms() {
        let c = aero_coeffs(AeroModel::Surrogate, 0.0, 0.0).value;
        assert_eq!(c, [-0.04, 0.012, 0.1745]);
    }

    #[test]
    fn coefficients_at_ten_degrees() {
        let c = aero_coeffs(AeroModel::Surrogate, 0.1745, 0.0).value;
        let hand = [-0.04 + 0.8 * 0.1745, 0.012 - 0.001745 + 0.6 * 0.03045025, 0.0];
        for i in 0..3 {
            assert!((c[i] - hand[i]).abs() < 1e-10);
        }
        assert!((c[0] - 0.0996).abs() < 1e-10);
        assert!(c[2].abs() < 1e-10);
    }

    #[test]
    fn truth_scales_surrogate() {
        let s = aero_coeffs(AeroModel::Surrogate, 0.2, -0.1).value;
        let t = aero_coeffs(AeroModel::Truth { eps: 0.05 }, 0.2, -0.1).value;
        assert_eq!(t[0], 1.05 * s[0]);
        assert_eq!(t[1], 0.95 * s[1]);
        assert_eq!(t[2], 1.05 * s[2]);
    }

    #[test]
    fn sea_level_density() {
        assert_eq!(density(0.0), 1.225);
    }

    #[test]
    fn level_flight_has_no_climb_rate() {
        let x = [0.0, 30000.0, 5000.0, 0.0, 0.1, 0.0];
        let f = hypersonic_dynamics(&VehicleParams::default(), AeroModel::Surrogate, &x, 0.0).unwrap();
        assert_eq!(f[0], 5000.0);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn non_positive_speed_is_rejected() {
        let x = [0.0, 30000.0, 0.0, 0.0, 0.1, 0.0];
        assert!(hypersonic_dynamics(&VehicleParams::default(), AeroModel::Surrogate, &x, 0.0).is_err());
    }

    #[test]
    fn dynamics_derivatives_pass_taylor_checks() {
        let prob = build_max_downrange(&VehicleParams::default(), AeroModel::Truth { eps: 0.03 }).unwrap();
        let y = [1.2e5, 60000.0, 4500.0, -0.03, 0.15, 0.01, 0.05, 1500.0];
        let scale = 1e-4;
        let steps: Vec<f64> = (0..4).map(|i| scale * 0.5f64.powi(i)).collect();
        for check in check_model(prob.funcs.as_ref(), prob.g.as_ref(), 0.4, &y, &steps, 3) {
            assert!(check.passes(0.1), "{}: {:?}", check.name, check.taylor.iter().map(|t| &t.ratios).collect::<Vec<_>>());
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [UnitScheme::Si, UnitScheme::KgKmS] {
            assert_eq!(s.to_string().parse::<UnitScheme>().unwrap(), s);
        }
        assert!("imperial".parse::<UnitScheme>().is_err());
    }

    #[test]
    fn kilometre_scaling_of_altitude() {
        let s = UnitScaling::new(UnitScheme::KgKmS);
        assert_eq!(s.scale_x(&initial_state())[1], 80.0);
    }
}
