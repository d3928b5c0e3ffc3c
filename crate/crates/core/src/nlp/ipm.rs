use nalgebra::DVector;

use super::ldl::{Inertia, SymmetricFactorization};
use super::sparse::{SymmetricSparse, Triplets};
use super::{NlpError, NlpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Termination tolerance on the unscaled KKT residual.
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    pub mu_init: f64,
    /// Linear barrier reduction factor.
    pub mu_reduction: f64,
    /// Superlinear barrier reduction exponent.
    pub mu_exponent: f64,
    /// The barrier subproblem is solved to `barrier_tolerance_factor · μ`.
    pub barrier_tolerance_factor: f64,
    pub fraction_to_boundary: f64,
    pub backtracking_factor: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// First nonzero Hessian shift tried when the inertia is wrong.
    pub regularization_floor: f64,
    pub regularization_max: f64,
    /// Relative distance by which the initial point is pushed inside the bounds.
    pub bound_push: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-8,
            max_iterations: 200,
            mu_init: 0.1,
            mu_reduction: 0.2,
            mu_exponent: 1.5,
            barrier_tolerance_factor: 10.0,
            fraction_to_boundary: 0.99,
            backtracking_factor: 0.5,
            armijo: 1e-4,
            max_backtracks: 40,
            regularization_floor: 1e-8,
            regularization_max: 1e20,
            bound_push: 1e-2,
            verbose: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), NlpError> {
        let positive = [
            ("kkt_tolerance", self.kkt_tolerance),
            ("mu_init", self.mu_init),
            ("armijo", self.armijo),
            ("regularization_floor", self.regularization_floor),
            ("bound_push", self.bound_push),
            ("barrier_tolerance_factor", self.barrier_tolerance_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NlpError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("mu_reduction", self.mu_reduction),
            ("fraction_to_boundary", self.fraction_to_boundary),
            ("backtracking_factor", self.backtracking_factor),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(NlpError::InvalidInput(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.mu_exponent > 1.0 && self.mu_exponent < 2.0) {
            return Err(NlpError::InvalidInput("mu_exponent must lie in (1, 2)".into()));
        }
        if self.regularization_max <= self.regularization_floor {
            return Err(NlpError::InvalidInput("regularization_max must exceed the floor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    /// Equality multipliers `y` (see the module-level sign convention).
    pub y: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
    pub complementarity: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Constraint violation and barrier objective around each accepted step.
    pub step_history: Vec<StepRecord>,
}

/// `θ = ‖c‖₁` and `φ = f + μ·barrier` before and after one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl NlpSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

struct BoundSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
}

impl BoundSet {
    fn slack_l(&self, z: &[f64], i: usize) -> f64 {
        z[i] - self.lower[i]
    }

    fn slack_u(&self, z: &[f64], i: usize) -> f64 {
        self.upper[i] - z[i]
    }

    fn barrier(&self, z: &[f64]) -> Option<f64> {
        let mut b = 0.0;
        for i in 0..z.len() {
            if self.has_l[i] {
                let s = self.slack_l(z, i);
                if !(s > 0.0) {
                    return None;
                }
                b -= s.ln();
            }
            if self.has_u[i] {
                let s = self.slack_u(z, i);
                if !(s > 0.0) {
                    return None;
                }
                b -= s.ln();
            }
        }
        Some(b)
    }
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    c: DVector<f64>,
    jac: Triplets,
}

fn evaluate(nlp: &dyn NlpProblem, z: &[f64], iteration: usize) -> Result<Eval, NlpError> {
    let f = nlp.objective(z);
    if !f.is_finite() {
        return Err(NlpError::NonFinite { what: "objective", iteration });
    }
    let grad = nlp.gradient(z);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(NlpError::NonFinite { what: "objective gradient", iteration });
    }
    let c = nlp.constraints(z);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(NlpError::NonFinite { what: "constraints", iteration });
    }
    let jac = nlp.jacobian(z);
    if jac.vals.iter().any(|v| !v.is_finite()) {
        return Err(NlpError::NonFinite { what: "constraint jacobian", iteration });
    }
    Ok(Eval { f, grad, c, jac })
}

/// Residuals `(dual, primal, complementarity)` at barrier parameter `mu`.
fn residuals(
    bounds: &BoundSet,
    z: &[f64],
    e: &Eval,
    y: &[f64],
    zl: &[f64],
    zu: &[f64],
    mu: f64,
) -> (f64, f64, f64) {
    let mut rd = &e.grad + e.jac.tr_mul_vec(y);
    let mut compl: f64 = 0.0;
    for i in 0..z.len() {
        if bounds.has_l[i] {
            rd[i] -= zl[i];
            compl = compl.max((bounds.slack_l(z, i) * zl[i] - mu).abs());
        }
        if bounds.has_u[i] {
            rd[i] += zu[i];
            compl = compl.max((bounds.slack_u(z, i) * zu[i] - mu).abs());
        }
    }
    (rd.amax(), e.c.amax(), compl)
}

struct Kkt {
    matrix: SymmetricSparse,
    fact: SymmetricFactorization,
}

/// Assemble and factor `[[W + Σ + δ_w I, Jᵀ], [J, −δ_c I]]`.
fn factor_kkt(
    hess: &Triplets,
    sigma: &[f64],
    jac: &Triplets,
    n: usize,
    m: usize,
    delta_w: f64,
    delta_c: f64,
) -> Result<Kkt, NlpError> {
    let mut t = Triplets::with_capacity(n + m, n + m, hess.nnz() + jac.nnz() + n + m);
    for ((&i, &j), &v) in hess.rows.iter().zip(&hess.cols).zip(&hess.vals) {
        t.push(i, j, v);
    }
    for (i, s) in sigma.iter().enumerate() {
        t.push(i, i, s + delta_w);
    }
    for ((&i, &j), &v) in jac.rows.iter().zip(&jac.cols).zip(&jac.vals) {
        t.push(n + i, j, v);
    }
    for i in 0..m {
        t.push(n + i, n + i, -delta_c);
    }
    let matrix = SymmetricSparse::from_triplets(n + m, &t);
    let fact = SymmetricFactorization::factor(&matrix)?;
    Ok(Kkt { matrix, fact })
}

fn fraction_to_boundary(tau: f64, s: &[f64], ds: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for (&si, &dsi) in s.iter().zip(ds) {
        if dsi < 0.0 {
            alpha = alpha.min(-tau * si / dsi);
        }
    }
    alpha
}

/// Solve `nlp` from `z_init` by a primal-dual interior point method.
///
/// Returns the final iterate with status `MaxIterations` or
/// `LineSearchFailed` when the tolerance is not reached; errors are reserved
/// for non-finite evaluations, an unfactorable KKT matrix and bad input.
pub fn solve(nlp: &dyn NlpProblem, z_init: &[f64], config: &SolverConfig) -> Result<NlpSolution, NlpError> {
    config.validate()?;
    let n = nlp.n_vars();
    let m = nlp.n_cons();
    if z_init.len() != n {
        return Err(NlpError::DimensionMismatch { what: "initial point", expected: n, got: z_init.len() });
    }
    let (lower, upper) = nlp.bounds();
    if lower.len() != n || upper.len() != n {
        return Err(NlpError::DimensionMismatch { what: "bounds", expected: n, got: lower.len().min(upper.len()) });
    }
    for i in 0..n {
        if lower[i].is_nan() || upper[i].is_nan() || lower[i] >= upper[i] {
            return Err(NlpError::InvalidInput(format!(
                "variable {i} has empty interior: [{}, {}]",
                lower[i], upper[i]
            )));
        }
    }
    let bounds = BoundSet {
        has_l: lower.iter().map(|v| v.is_finite()).collect(),
        has_u: upper.iter().map(|v| v.is_finite()).collect(),
        lower,
        upper,
    };

    let mut z = z_init.to_vec();
    for i in 0..n {
        let (l, u) = (bounds.lower[i], bounds.upper[i]);
        let push = |b: f64| config.bound_push * b.abs().max(1.0);
        let width = u - l;
        if bounds.has_l[i] {
            let p = if bounds.has_u[i] { push(l).min(config.bound_push * width) } else { push(l) };
            z[i] = z[i].max(l + p);
        }
        if bounds.has_u[i] {
            let p = if bounds.has_l[i] { push(u).min(config.bound_push * width) } else { push(u) };
            z[i] = z[i].min(u - p);
        }
    }
    let mut zl: Vec<f64> = bounds.has_l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = bounds.has_u.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut mu = config.mu_init;
    let mut eval = evaluate(nlp, &z, 0)?;
    let mut y = initial_multipliers(&eval, &zl, &zu, n, m);

    let theta_init: f64 = eval.c.iter().map(|v| v.abs()).sum();
    let theta_max = 1e4 * theta_init.max(1.0);
    let theta_min = 1e-4 * theta_init.max(1.0);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut last_delta_w: f64 = 0.0;
    let mut step_history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iteration = 0;
    let tol = config.kkt_tolerance;

    loop {
        let (d0, p0, c0) = residuals(&bounds, &z, &eval, &y, &zl, &zu, 0.0);
        if d0.max(p0).max(c0) <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if iteration >= config.max_iterations {
            break;
        }
        loop {
            let (dm, pm, cm) = residuals(&bounds, &z, &eval, &y, &zl, &zu, mu);
            if dm.max(pm).max(cm) > config.barrier_tolerance_factor * mu || mu <= tol / 10.0 {
                break;
            }
            mu = (tol / 10.0).max((config.mu_reduction * mu).min(mu.powf(config.mu_exponent)));
            filter.clear();
        }

        let hess = nlp.hessian(&z, 1.0, &y);
        if hess.vals.iter().any(|v| !v.is_finite()) {
            return Err(NlpError::NonFinite { what: "lagrangian hessian", iteration });
        }
        let mut sigma = vec![0.0; n];
        let mut grad_barrier = eval.grad.clone();
        for i in 0..n {
            if bounds.has_l[i] {
                let s = bounds.slack_l(&z, i);
                sigma[i] += zl[i] / s;
                grad_barrier[i] -= mu / s;
            }
            if bounds.has_u[i] {
                let s = bounds.slack_u(&z, i);
                sigma[i] += zu[i] / s;
                grad_barrier[i] += mu / s;
            }
        }

        // Inertia correction.
        let want = Inertia { positive: n, negative: m, zero: 0 };
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        let kkt = loop {
            let kkt = factor_kkt(&hess, &sigma, &eval.jac, n, m, delta_w, delta_c)?;
            let inertia = kkt.fact.inertia();
            if inertia == want {
                break kkt;
            }
            if inertia.zero > 0 && delta_c == 0.0 && m > 0 {
                delta_c = 1e-8 * mu.powf(0.25);
                continue;
            }
            delta_w = if delta_w == 0.0 {
                if last_delta_w > 0.0 {
                    config.regularization_floor.max(last_delta_w / 3.0)
                } else {
                    config.regularization_floor
                }
            } else {
                2.0 * delta_w
            };
            if delta_w > config.regularization_max {
                return Err(NlpError::SingularKkt(format!(
                    "iteration {iteration}: inertia {inertia:?}, wanted {want:?}"
                )));
            }
        };
        if delta_w > 0.0 {
            last_delta_w = delta_w;
        }

        let mut rhs = vec![0.0; n + m];
        let jty = eval.jac.tr_mul_vec(&y);
        for i in 0..n {
            rhs[i] = -(grad_barrier[i] + jty[i]);
        }
        for i in 0..m {
            rhs[n + i] = -eval.c[i];
        }
        let (sol, _) = kkt.fact.solve_refined_unchecked(&kkt.matrix, &rhs, 3)?;
        let dz: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let dy: Vec<f64> = sol.rows(n, m).iter().copied().collect();
        let (dzl, dzu) = bound_multiplier_steps(&bounds, &z, &zl, &zu, &dz, mu);

        // Fraction to the boundary.
        let tau = config.fraction_to_boundary.max(1.0 - mu);
        let alpha_max = max_primal_step(&bounds, &z, &dz, tau);
        let alpha_dual = {
            let idx: Vec<usize> = (0..n).collect();
            let zl_s: Vec<f64> = idx.iter().filter(|&&i| bounds.has_l[i]).map(|&i| zl[i]).collect();
            let dzl_s: Vec<f64> = idx.iter().filter(|&&i| bounds.has_l[i]).map(|&i| dzl[i]).collect();
            let zu_s: Vec<f64> = idx.iter().filter(|&&i| bounds.has_u[i]).map(|&i| zu[i]).collect();
            let dzu_s: Vec<f64> = idx.iter().filter(|&&i| bounds.has_u[i]).map(|&i| dzu[i]).collect();
            fraction_to_boundary(tau, &zl_s, &dzl_s).min(fraction_to_boundary(tau, &zu_s, &dzu_s))
        };

        // Filter line search on (θ, φ) = (‖c‖₁, f + μ·barrier).
        let theta0: f64 = eval.c.iter().map(|v| v.abs()).sum();
        let phi0 = bounds
            .barrier(&z)
            .map(|b| eval.f + mu * b)
            .filter(|v| v.is_finite())
            .ok_or(NlpError::NonFinite { what: "barrier objective", iteration })?;
        let dz_v = DVector::from_column_slice(&dz);
        let grad_dz = grad_barrier.dot(&dz_v);
        let (s_theta, s_phi, delta_switch): (f64, f64, f64) = (1.1, 2.3, 1.0);
        let (gamma_theta, gamma_phi): (f64, f64) = (1e-5, 1e-8);
        let switching = |alpha: f64| grad_dz < 0.0 && alpha * (-grad_dz).powf(s_phi) > delta_switch * theta0.powf(s_theta);
        let alpha_min = {
            let mut a = gamma_theta;
            if grad_dz < 0.0 {
                a = a.min(gamma_phi * theta0 / -grad_dz);
                if theta0 <= theta_min {
                    a = a.min(delta_switch * theta0.powf(s_theta) / (-grad_dz).powf(s_phi));
                }
            }
            0.05 * a
        };
        let in_filter = |theta: f64, phi: f64| filter.iter().any(|&(ft, fp)| theta >= ft && phi >= fp);
        // Returns whether the trial is acceptable and whether it is an f-type step.
        let acceptable = |alpha: f64, theta: f64, phi: f64| -> Option<bool> {
            if theta > theta_max || in_filter(theta, phi) {
                return None;
            }
            if theta0 <= theta_min && switching(alpha) {
                (phi <= phi0 + config.armijo * alpha * grad_dz).then_some(true)
            } else {
                (theta <= (1.0 - gamma_theta) * theta0 || phi <= phi0 - gamma_phi * theta0).then_some(false)
            }
        };
        let trial_point = |step: &[f64], alpha: f64| -> Vec<f64> {
            z.iter().zip(step).map(|(a, b)| a + alpha * b).collect()
        };
        let measure = |zz: &[f64]| -> Option<(DVector<f64>, f64, f64)> {
            let f = nlp.objective(zz);
            let phi = f + mu * bounds.barrier(zz)?;
            if !phi.is_finite() {
                return None;
            }
            let c = nlp.constraints(zz);
            if c.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let theta = c.iter().map(|v| v.abs()).sum();
            Some((c, theta, phi))
        };
        let tiny = dz.iter().zip(&z).all(|(d, v)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + v.abs()));

        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, f64, f64, bool)> = None;
        for k in 0..config.max_backtracks {
            if alpha < alpha_min && !tiny {
                break;
            }
            let zt = trial_point(&dz, alpha);
            let Some((ct, theta_t, phi_t)) = measure(&zt) else {
                alpha *= config.backtracking_factor;
                continue;
            };
            if tiny {
                accepted = Some((zt, theta_t, phi_t, true));
                break;
            }
            if let Some(f_type) = acceptable(alpha, theta_t, phi_t) {
                accepted = Some((zt, theta_t, phi_t, f_type));
                break;
            }
            if k == 0 && m > 0 && theta_t >= theta0 {
                // Second-order corrections.
                let mut c_soc: Vec<f64> = (0..m).map(|i| alpha * eval.c[i] + ct[i]).collect();
                let mut theta_prev = theta0;
                let mut theta_soc = theta_t;
                for _ in 0..4 {
                    if theta_soc > 0.99 * theta_prev && theta_prev != theta0 {
                        break;
                    }
                    let mut rhs_soc = rhs.clone();
                    for i in 0..m {
                        rhs_soc[n + i] = -c_soc[i];
                    }
                    let Ok((soc, _)) = kkt.fact.solve_refined_unchecked(&kkt.matrix, &rhs_soc, 3) else {
                        break;
                    };
                    let dsoc: Vec<f64> = soc.rows(0, n).iter().copied().collect();
                    let a_soc = max_primal_step(&bounds, &z, &dsoc, tau);
                    let zs = trial_point(&dsoc, a_soc);
                    let Some((cs, ts, ps)) = measure(&zs) else { break };
                    if let Some(f_type) = acceptable(alpha, ts, ps) {
                        accepted = Some((zs, ts, ps, f_type));
                        break;
                    }
                    for i in 0..m {
                        c_soc[i] = a_soc * c_soc[i] + cs[i];
                    }
                    theta_prev = theta_soc;
                    theta_soc = ts;
                }
                if accepted.is_some() {
                    break;
                }
            }
            alpha *= config.backtracking_factor;
        }
        let Some((z_new, theta_new, phi_new, f_type)) = accepted else {
            status = SolveStatus::LineSearchFailed;
            break;
        };
        if !(f_type && switching(alpha)) {
            filter.push(((1.0 - gamma_theta) * theta0, phi0 - gamma_phi * theta0));
        }
        step_history.push(StepRecord { theta: (theta0, theta_new), phi: (phi0, phi_new) });
        if config.verbose {
            let (d, p, c) = residuals(&bounds, &z, &eval, &y, &zl, &zu, 0.0);
            eprintln!(
                "{iteration:4} f={:+.10e} dual={d:.2e} primal={p:.2e} compl={c:.2e} mu={mu:.1e} reg={delta_w:.1e} alpha={alpha:.2e}",
                eval.f
            );
        }

        z = z_new;
        for i in 0..m {
            y[i] += alpha * dy[i];
        }
        for i in 0..n {
            if bounds.has_l[i] {
                zl[i] += alpha_dual * dzl[i];
                let s = bounds.slack_l(&z, i);
                zl[i] = zl[i].clamp(mu / (1e10 * s), 1e10 * mu / s);
            }
            if bounds.has_u[i] {
                zu[i] += alpha_dual * dzu[i];
                let s = bounds.slack_u(&z, i);
                zu[i] = zu[i].clamp(mu / (1e10 * s), 1e10 * mu / s);
            }
        }
        iteration += 1;
        eval = evaluate(nlp, &z, iteration)?;
    }

    let (dual, primal, compl) = residuals(&bounds, &z, &eval, &y, &zl, &zu, 0.0);
    Ok(NlpSolution {
        objective: eval.f,
        z,
        y,
        z_lower: zl,
        z_upper: zu,
        kkt_residual: dual.max(primal).max(compl),
        dual_infeasibility: dual,
        primal_infeasibility: primal,
        complementarity: compl,
        iterations: iteration,
        status,
        step_history,
    })
}

fn max_primal_step(bounds: &BoundSet, z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..z.len() {
        if bounds.has_l[i] && dz[i] < 0.0 {
            alpha = alpha.min(-tau * bounds.slack_l(z, i) / dz[i]);
        }
        if bounds.has_u[i] && dz[i] > 0.0 {
            alpha = alpha.min(tau * bounds.slack_u(z, i) / dz[i]);
        }
    }
    alpha
}

fn bound_multiplier_steps(
    bounds: &BoundSet,
    z: &[f64],
    zl: &[f64],
    zu: &[f64],
    dz: &[f64],
    mu: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = z.len();
    let mut dzl = vec![0.0; n];
    let mut dzu = vec![0.0; n];
    for i in 0..n {
        if bounds.has_l[i] {
            let s = bounds.slack_l(z, i);
            dzl[i] = mu / s - zl[i] - zl[i] / s * dz[i];
        }
        if bounds.has_u[i] {
            let s = bounds.slack_u(z, i);
            dzu[i] = mu / s - zu[i] + zu[i] / s * dz[i];
        }
    }
    (dzl, dzu)
}

/// Least-squares equality multipliers from `[[I, Jᵀ], [J, 0]]`, discarded
/// when large or unavailable.
fn initial_multipliers(e: &Eval, zl: &[f64], zu: &[f64], n: usize, m: usize) -> Vec<f64> {
    if m == 0 {
        return Vec::new();
    }
    let empty = Triplets::new(n, n);
    let ones = vec![1.0; n];
    let Ok(kkt) = factor_kkt(&empty, &ones, &e.jac, n, m, 0.0, 0.0) else {
        return vec![0.0; m];
    };
    if kkt.fact.is_singular() {
        return vec![0.0; m];
    }
    let mut rhs = vec![0.0; n + m];
    for i in 0..n {
        rhs[i] = -(e.grad[i] - zl[i] + zu[i]);
    }
    match kkt.fact.solve(&rhs) {
        Ok(sol) => {
            let y: Vec<f64> = sol.rows(n, m).iter().copied().collect();
            if y.iter().all(|v| v.abs() <= 1e3) {
                y
            } else {
                vec![0.0; m]
            }
        }
        Err(_) => vec![0.0; m],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `min Σ (z_i − a_i)² s.t. z_0 + z_1 = 1` with optional bounds.
    struct Qp {
        a: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    }

    impl NlpProblem for Qp {
        fn n_vars(&self) -> usize {
            self.a.len()
        }
        fn n_cons(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (self.lower.clone(), self.upper.clone())
        }
        fn objective(&self, z: &[f64]) -> f64 {
            z.iter().zip(&self.a).map(|(x, a)| (x - a).powi(2)).sum()
        }
        fn gradient(&self, z: &[f64]) -> DVector<f64> {
            DVector::from_iterator(z.len(), z.iter().zip(&self.a).map(|(x, a)| 2.0 * (x - a)))
        }
        fn constraints(&self, z: &[f64]) -> DVector<f64> {
            DVector::from_element(1, z[0] + z[1] - 1.0)
        }
        fn jacobian(&self, _z: &[f64]) -> Triplets {
            let mut t = Triplets::new(1, self.a.len());
            t.push(0, 0, 1.0);
            t.push(0, 1, 1.0);
            t
        }
        fn hessian(&self, z: &[f64], obj_factor: f64, _y: &[f64]) -> Triplets {
            let mut t = Triplets::new(z.len(), z.len());
            for i in 0..z.len() {
                t.push(i, i, 2.0 * obj_factor);
            }
            t
        }
    }

    #[test]
    fn active_bound_is_found_with_positive_multiplier() {
        // Unconstrained-by-bounds optimum would be z_0 = 1.5, z_1 = -0.5; bound z_1 ≥ 0.
        let inf = f64::INFINITY;
        let qp = Qp { a: vec![2.0, 0.0], lower: vec![-inf, 0.0], upper: vec![inf, inf] };
        let sol = solve(&qp, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert!(sol.converged(), "{sol:?}");
        assert!((sol.z[0] - 1.0).abs() < 1e-7 && sol.z[1].abs() < 1e-7, "{:?}", sol.z);
        assert!(sol.z_lower[1] > 1.0);
        assert!(sol.complementarity <= 10.0 * 1e-8);
    }

    #[test]
    fn every_step_reduces_violation_or_barrier_objective() {
        let qp = Qp { a: vec![3.0, -1.0, 0.5], lower: vec![-1.0, -0.2, -5.0], upper: vec![2.5, 1.0, 5.0] };
        let sol = solve(&qp, &[0.0, 0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(sol.converged());
        assert!(!sol.step_history.is_empty());
        for r in &sol.step_history {
            assert!(r.theta.1 < r.theta.0 || r.phi.1 < r.phi.0, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig { mu_reduction: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
