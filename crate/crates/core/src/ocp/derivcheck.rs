//! Numerical verification of claimed derivatives.
//!
//! Two checks are provided. The Taylor test evaluates the first-order
//! remainder `r(h) = ‖F(z + h d) − F(z) − h J d‖∞` at a decreasing sequence of
//! steps; a correct Jacobian gives `r(h) = O(h²)` so the ratios of successive
//! remainders approach 4 when the step halves. The entrywise check compares
//! the claimed Jacobian against central differences and flags outliers.

use nalgebra::{DMatrix, DVector};

use super::{ComponentFunction, ProblemFunctions};

/// Remainders below this (relative to the function scale) count as exact.
const EXACT_FLOOR: f64 = 1e-12;

/// Result of the Taylor test along one direction.
#[derive(Debug, Clone)]
pub struct TaylorCheck {
    pub steps: Vec<f64>,
    /// `None` where an evaluation was not finite.
    pub remainders: Vec<Option<f64>>,
    /// `remainders[k] / remainders[k + 1]`.
    pub ratios: Vec<Option<f64>>,
    /// Scale used to decide that a remainder is at round-off level.
    pub scale: f64,
}

impl TaylorCheck {
    /// `true` when every ratio is within `rel_tol` of `target`, or the
    /// remainders are at round-off level (the model is linear along `d`).
    pub fn passes(&self, target: f64, rel_tol: f64) -> bool {
        if self.remainders.iter().any(|r| r.is_none()) {
            return false;
        }
        if self.is_exact() {
            return true;
        }
        self.ratios
            .iter()
            .all(|r| r.is_some_and(|r| (r - target).abs() <= rel_tol * target))
    }

    pub fn is_exact(&self) -> bool {
        self.remainders
            .iter()
            .all(|r| r.is_some_and(|r| r <= EXACT_FLOOR * self.scale.max(1.0)))
    }

    /// Ratio farthest from `target`, for reporting.
    pub fn worst_ratio(&self, target: f64) -> Option<f64> {
        self.ratios
            .iter()
            .flatten()
            .copied()
            .max_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
    }
}

/// Taylor test of `jac` as the derivative of `value` at `point` along each
/// direction. Non-finite evaluations are recorded per step, not fatal.
pub fn check_derivatives<F>(
    value: F,
    jac: &DMatrix<f64>,
    point: &[f64],
    directions: &[Vec<f64>],
    steps: &[f64],
) -> Vec<TaylorCheck>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let f0 = value(point);
    let scale = f0.amax();
    directions
        .iter()
        .map(|d| {
            let dv = DVector::from_column_slice(d);
            let lin = jac * &dv;
            let remainders: Vec<Option<f64>> = steps
                .iter()
                .map(|&h| {
                    let z: Vec<f64> = point.iter().zip(d).map(|(a, b)| a + h * b).collect();
                    let fz = value(&z);
                    let r = (fz - &f0 - &lin * h).amax();
                    r.is_finite().then_some(r)
                })
                .collect();
            let ratios = remainders
                .windows(2)
                .map(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                    _ => None,
                })
                .collect();
            TaylorCheck { steps: steps.to_vec(), remainders, ratios, scale }
        })
        .collect()
}

/// An entry where the claimed Jacobian disagrees with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedEntry {
    pub row: usize,
    pub col: usize,
    pub claimed: f64,
    pub finite_difference: f64,
}

#[derive(Debug, Clone)]
pub struct JacobianComparison {
    pub max_abs_deviation: f64,
    pub flagged: Vec<FlaggedEntry>,
}

/// Central-difference Jacobian of `value` at `point` with a uniform step.
pub fn central_difference_jacobian<F>(value: F, point: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let m = value(point).len();
    let mut jac = DMatrix::zeros(m, point.len());
    let mut z = point.to_vec();
    for j in 0..point.len() {
        z[j] = point[j] + step;
        let plus = value(&z);
        z[j] = point[j] - step;
        let minus = value(&z);
        z[j] = point[j];
        jac.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// Compare `jac` entrywise to central differences with step `step`; entries
/// deviating by more than `tol` are flagged.
pub fn compare_jacobian<F>(value: F, jac: &DMatrix<f64>, point: &[f64], step: f64, tol: f64) -> JacobianComparison
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let fd = central_difference_jacobian(value, point, step);
    let mut max_abs_deviation: f64 = 0.0;
    let mut flagged = Vec::new();
    for j in 0..jac.ncols() {
        for i in 0..jac.nrows() {
            let dev = (jac[(i, j)] - fd[(i, j)]).abs();
            if !(dev <= tol) {
                flagged.push(FlaggedEntry { row: i, col: j, claimed: jac[(i, j)], finite_difference: fd[(i, j)] });
            }
            if dev.is_nan() {
                max_abs_deviation = f64::NAN;
            } else if !max_abs_deviation.is_nan() {
                max_abs_deviation = max_abs_deviation.max(dev);
            }
        }
    }
    JacobianComparison { max_abs_deviation, flagged }
}

/// One named derivative in a model-wide check.
#[derive(Debug, Clone)]
pub struct NamedCheck {
    pub name: String,
    pub taylor: Vec<TaylorCheck>,
}

impl NamedCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.taylor.iter().all(|c| c.passes(4.0, rel_tol))
    }
}

fn row(v: DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

/// Deterministic pseudo-random directions scaled componentwise by `scale`.
pub fn probe_directions(count: usize, scale: &[f64]) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            scale
                .iter()
                .enumerate()
                .map(|(i, s)| s * (1.3 * (i as f64 + 1.0) + 2.9 * (k as f64 + 1.0)).sin())
                .collect()
        })
        .collect()
}

/// Taylor tests of every analytic derivative of `funcs` and `g` at `(t, y)`:
/// dynamics Jacobian and weighted Hessian, running cost gradient and Hessian,
/// terminal cost gradient and Hessian, and the component Jacobian and
/// Hessians. Directions are scaled by `max(|w_i|, 1)`.
pub fn check_model(
    funcs: &dyn ProblemFunctions,
    g: &dyn ComponentFunction,
    t: f64,
    y: &[f64],
    steps: &[f64],
    n_directions: usize,
) -> Vec<NamedCheck> {
    let d = funcs.dims();
    let n_y = d.n_y();
    let gv = g.value(t, y);
    let w: Vec<f64> = y.iter().chain(gv.iter()).copied().collect();
    let w_dirs = probe_directions(n_directions, &w.iter().map(|v| v.abs().max(1.0)).collect::<Vec<_>>());
    let y_dirs = probe_directions(n_directions, &y.iter().map(|v| v.abs().max(1.0)).collect::<Vec<_>>());
    let split = |w: &[f64]| (w[..n_y].to_vec(), w[n_y..].to_vec());
    let mu: Vec<f64> = (0..d.n_x).map(|i| 1.0 + 0.5 * i as f64).collect();
    let mu_v = DVector::from_column_slice(&mu);
    let mut out = Vec::new();

    let jac = funcs.dynamics_jacobian(t, y, gv.as_slice());
    out.push(NamedCheck {
        name: "dynamics jacobian".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split(z);
                funcs.dynamics(t, &a, &b)
            },
            &jac,
            &w,
            &w_dirs,
            steps,
        ),
    });
    out.push(NamedCheck {
        name: "dynamics hessian".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split(z);
                funcs.dynamics_jacobian(t, &a, &b).tr_mul(&mu_v)
            },
            &funcs.dynamics_hessian(t, y, gv.as_slice(), &mu),
            &w,
            &w_dirs,
            steps,
        ),
    });
    let lgrad = funcs.running_cost_gradient(t, y, gv.as_slice());
    out.push(NamedCheck {
        name: "running cost gradient".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split(z);
                DVector::from_element(1, funcs.running_cost(t, &a, &b))
            },
            &DMatrix::from_row_slice(1, lgrad.len(), lgrad.as_slice()),
            &w,
            &w_dirs,
            steps,
        ),
    });
    out.push(NamedCheck {
        name: "running cost hessian".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split(z);
                funcs.running_cost_gradient(t, &a, &b)
            },
            &funcs.running_cost_hessian(t, y, gv.as_slice()),
            &w,
            &w_dirs,
            steps,
        ),
    });

    let xp: Vec<f64> = d.x_range().chain(d.p_range()).map(|i| y[i]).collect();
    let xp_dirs = probe_directions(n_directions, &xp.iter().map(|v| v.abs().max(1.0)).collect::<Vec<_>>());
    let split_xp = |z: &[f64]| (z[..d.n_x].to_vec(), z[d.n_x..].to_vec());
    let (xf, p) = split_xp(&xp);
    out.push(NamedCheck {
        name: "terminal cost gradient".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split_xp(z);
                DVector::from_element(1, funcs.terminal_cost(&a, &b))
            },
            &row(funcs.terminal_cost_gradient(&xf, &p)),
            &xp,
            &xp_dirs,
            steps,
        ),
    });
    out.push(NamedCheck {
        name: "terminal cost hessian".into(),
        taylor: check_derivatives(
            |z| {
                let (a, b) = split_xp(z);
                funcs.terminal_cost_gradient(&a, &b)
            },
            &funcs.terminal_cost_hessian(&xf, &p),
            &xp,
            &xp_dirs,
            steps,
        ),
    });

    out.push(NamedCheck {
        name: "component jacobian".into(),
        taylor: check_derivatives(|z| g.value(t, z), &g.jacobian(t, y), y, &y_dirs, steps),
    });
    for (i, h) in g.hessians(t, y).iter().enumerate() {
        out.push(NamedCheck {
            name: format!("component hessian {i}"),
            taylor: check_derivatives(|z| g.jacobian(t, z).row(i).transpose(), h, y, &y_dirs, steps),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_remainder_ratio_is_four() {
        let z0 = [0.3, -1.2, 2.0];
        let value = |z: &[f64]| DVector::from_element(1, z.iter().map(|v| v * v).sum::<f64>());
        let grad = DMatrix::from_row_slice(1, 3, &[0.6, -2.4, 4.0]);
        let dirs = vec![vec![1.0, 0.5, -0.25], vec![0.0, 1.0, 0.0]];
        let checks = check_derivatives(value, &grad, &z0, &dirs, &[1e-2, 5e-3, 2.5e-3, 1.25e-3]);
        for c in &checks {
            assert!(c.passes(4.0, 1e-6), "{c:?}");
        }
    }

    #[test]
    fn wrong_entry_is_flagged_and_taylor_ratio_degrades() {
        let value = |z: &[f64]| DVector::from_vec(vec![z[0].sin() * z[1], z[1].exp()]);
        let z0 = [0.4, 0.7];
        let mut jac = DMatrix::from_row_slice(2, 2, &[0.4f64.cos() * 0.7, 0.4f64.sin(), 0.0, 0.7f64.exp()]);
        let good = compare_jacobian(value, &jac, &z0, 1e-5, 1e-6);
        assert!(good.flagged.is_empty(), "{good:?}");
        jac[(1, 0)] += 1e-2;
        let bad = compare_jacobian(value, &jac, &z0, 1e-5, 1e-6);
        assert_eq!(bad.flagged.len(), 1);
        assert_eq!((bad.flagged[0].row, bad.flagged[0].col), (1, 0));
        let checks = check_derivatives(value, &jac, &z0, &[vec![1.0, 0.0]], &[1e-3, 5e-4, 2.5e-4]);
        assert!(!checks[0].passes(4.0, 0.1));
    }

    #[test]
    fn non_finite_evaluations_are_reported_per_step() {
        let value = |z: &[f64]| DVector::from_element(1, if z[0] > 1.0 { f64::NAN } else { z[0] * z[0] });
        let jac = DMatrix::from_element(1, 1, 1.8);
        let checks = check_derivatives(value, &jac, &[0.9], &[vec![1.0]], &[0.2, 0.05, 0.025]);
        assert!(checks[0].remainders[0].is_none());
        assert!(checks[0].remainders[1].is_some());
        assert!(!checks[0].passes(4.0, 0.1));
    }
}
