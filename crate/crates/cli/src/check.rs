//! Self-test suite behind the `check` command.

use std::sync::Arc;

use ocpsens::adjoint::{qoi_directional_derivative, solve_adjoint_system};
use ocpsens::collocation::{differentiation_matrix, lgr_nodes, CollocationGrid, Transcription};
use ocpsens::hypersonic::{build_max_downrange, unit_scaling, AeroModel, UnitScheme, VehicleParams};
use ocpsens::nlp::SolverConfig;
use ocpsens::ocp::derivcheck::{check_model, compare_jacobian};
use ocpsens::ocp::{Dims, ProblemFunctions};
use ocpsens::sensitivity::{assemble_lq_data, forward_qoi_derivative, solve_sensitivity};
use ocpsens::{toy, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::study::random_perturbation;
use crate::CliError;

const STATE_RATES: [&str; 6] = ["x1'", "x2'", "v'", "gamma'", "alpha'", "q'"];
const ARGUMENTS: [&str; 11] = ["x1", "x2", "v", "gamma", "alpha", "q", "delta", "T", "CL", "CD", "CM"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Test hook: perturbs one entry of the dynamics Jacobian by
/// `relative · max(|J_ij|, 1)`.
pub struct JacobianDefect {
    pub inner: Arc<dyn ProblemFunctions>,
    pub row: usize,
    pub col: usize,
    pub relative: f64,
}

impl ProblemFunctions for JacobianDefect {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }
    fn dynamics(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        self.inner.dynamics(t, y, g)
    }
    fn dynamics_jacobian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        let mut j = self.inner.dynamics_jacobian(t, y, g);
        let v = j[(self.row, self.col)];
        j[(self.row, self.col)] += self.relative * v.abs().max(1.0);
        j
    }
    fn dynamics_hessian(&self, t: f64, y: &[f64], g: &[f64], weights: &[f64]) -> DMatrix<f64> {
        self.inner.dynamics_hessian(t, y, g, weights)
    }
    fn running_cost(&self, t: f64, y: &[f64], g: &[f64]) -> f64 {
        self.inner.running_cost(t, y, g)
    }
    fn running_cost_gradient(&self, t: f64, y: &[f64], g: &[f64]) -> DVector<f64> {
        self.inner.running_cost_gradient(t, y, g)
    }
    fn running_cost_hessian(&self, t: f64, y: &[f64], g: &[f64]) -> DMatrix<f64> {
        self.inner.running_cost_hessian(t, y, g)
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
}

/// Largest monomial integration error of the `n`-point rule, degree ≤ 2n − 2.
pub fn quadrature_error(n: usize) -> Result<f64, CliError> {
    let (x, w) = lgr_nodes(n)?;
    let mut worst: f64 = 0.0;
    for k in 0..=(2 * n - 2) {
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
        let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        worst = worst.max((q - exact).abs());
    }
    Ok(worst)
}

/// Largest error of the differentiation matrix on `{−1} ∪ nodes` applied to
/// monomials of degree ≤ n.
pub fn differentiation_error(n: usize) -> Result<f64, CliError> {
    let (nodes, _) = lgr_nodes(n)?;
    let mut s = vec![-1.0];
    s.extend(nodes);
    let d = differentiation_matrix(&s)?;
    let mut worst: f64 = 0.0;
    for deg in 0..=n {
        let v = DVector::from_iterator(s.len(), s.iter().map(|x| x.powi(deg as i32)));
        let dv = &d * v;
        for (i, x) in s.iter().enumerate() {
            let exact = if deg == 0 { 0.0 } else { deg as f64 * x.powi(deg as i32 - 1) };
            worst = worst.max((dv[i] - exact).abs());
        }
    }
    Ok(worst)
}

/// Run every suite. `defect` injects a Jacobian error at `(row, col)`.
pub fn run_checks(seed: u64, defect: Option<(usize, usize)>) -> Result<Vec<CheckLine>, CliError> {
    let mut out = Vec::new();

    let mut table = String::from("n  max error\n");
    let mut ok = true;
    for n in 2..=8 {
        let e = quadrature_error(n)?;
        ok &= e < 1e-12;
        table.push_str(&format!("{n}  {e:.2e}\n"));
    }
    out.push(CheckLine { name: "quadrature exactness, degree <= 2n-2".into(), passed: ok, detail: table });

    let mut worst: f64 = 0.0;
    for n in 2..=8 {
        worst = worst.max(differentiation_error(n)?);
    }
    out.push(CheckLine {
        name: "differentiation exactness, degree <= n".into(),
        passed: worst < 1e-12,
        detail: format!("max error {worst:.2e}"),
    });

    let prob = build_max_downrange(&VehicleParams::default(), AeroModel::Truth { eps: 0.05 })?;
    let (scaled, _) = unit_scaling(&prob, UnitScheme::KgKmS)?;
    let funcs: Arc<dyn ProblemFunctions> = match defect {
        Some((row, col)) => {
            if row >= STATE_RATES.len() || col >= ARGUMENTS.len() {
                return Err(CliError::Config(format!("defect entry ({row}, {col}) out of range")));
            }
            Arc::new(JacobianDefect { inner: scaled.funcs.clone(), row, col, relative: 1e-2 })
        }
        None => scaled.funcs.clone(),
    };
    let y = [120.0, 60.0, 4.5, -0.03, 0.15, 0.01, 0.05, 1500.0];
    let steps: Vec<f64> = (0..4).map(|i| 1e-4 * 0.5f64.powi(i)).collect();
    for c in check_model(funcs.as_ref(), scaled.g.as_ref(), 0.4, &y, &steps, 3) {
        let worst = c
            .taylor
            .iter()
            .filter(|t| !t.is_exact())
            .filter_map(|t| t.worst_ratio(4.0))
            .max_by(|a, b| (a - 4.0).abs().total_cmp(&(b - 4.0).abs()));
        out.push(CheckLine {
            name: format!("taylor test: {}", c.name),
            passed: c.passes(0.1),
            detail: match worst {
                Some(r) => format!("worst remainder ratio {r:.4} (target 4)"),
                None => "exact along all directions".into(),
            },
        });
    }

    // Compare in variables and outputs scaled to unit magnitude so that one
    // step and one tolerance fit every entry.
    let g = scaled.g.value(0.4, &y);
    let w: Vec<f64> = y.iter().chain(g.iter()).copied().collect();
    let col_scale: Vec<f64> = w.iter().map(|v| v.abs().max(1.0)).collect();
    let f0 = funcs.dynamics(0.4, &y, g.as_slice());
    let row_scale: Vec<f64> = f0.iter().map(|v| v.abs().max(1e-3)).collect();
    let jac = funcs.dynamics_jacobian(0.4, &y, g.as_slice());
    let jac_scaled = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, j| jac[(i, j)] * col_scale[j] / row_scale[i]);
    let point: Vec<f64> = w.iter().zip(&col_scale).map(|(a, s)| a / s).collect();
    let value = |z: &[f64]| {
        let wz: Vec<f64> = z.iter().zip(&col_scale).map(|(a, s)| a * s).collect();
        let f = funcs.dynamics(0.4, &wz[..8], &wz[8..]);
        DVector::from_fn(f.len(), |i, _| f[i] / row_scale[i])
    };
    let tol = 1e-6;
    let cmp = compare_jacobian(value, &jac_scaled, &point, 1e-5, tol);
    let detail = match cmp.flagged.first() {
        Some(e) => format!(
            "{} flagged; first at d{}/d{} (row {}, column {}): claimed {:.6e}, central difference {:.6e}",
            cmp.flagged.len(),
            STATE_RATES[e.row],
            ARGUMENTS[e.col],
            e.row,
            e.col,
            e.claimed * row_scale[e.row] / col_scale[e.col],
            e.finite_difference * row_scale[e.row] / col_scale[e.col]
        ),
        None => format!("max scaled deviation {:.2e} (tolerance {tol:.0e})", cmp.max_abs_deviation),
    };
    out.push(CheckLine { name: "dynamics jacobian vs central differences".into(), passed: cmp.flagged.is_empty(), detail });

    let toy_prob = toy::two_output()?;
    let tr = Transcription::new(toy_prob, CollocationGrid::uniform(5, 3)?)?;
    let x0 = tr.prob.x0[0];
    let n_u = tr.layout.dims.n_u;
    let z0 = tr.pack_fn(|_| (vec![x0], vec![0.0; n_u]), &[])?;
    let sol = tr.solve(&z0, &SolverConfig { kkt_tolerance: 1e-12, ..SolverConfig::default() })?;
    let lq = assemble_lq_data(&sol)?;
    let qoi = lq.transcription.prob.qoi.clone().ok_or(CliError::Solver("toy problem has no QoI".into()))?;
    let adj = solve_adjoint_system(&lq, qoi.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let pert = random_perturbation(&lq, &mut rng);
        let dz = solve_sensitivity(&lq, &pert)?;
        let fwd = forward_qoi_derivative(&lq, &dz, &pert, qoi.as_ref())?;
        let bwd = qoi_directional_derivative(&lq, &adj, &pert, qoi.as_ref())?;
        worst = worst.max((fwd - bwd).abs() / fwd.abs().max(1e-300));
    }
    out.push(CheckLine {
        name: "forward/adjoint duality, 10 random directions".into(),
        passed: worst < 1e-8,
        detail: format!("max relative difference {worst:.2e} (seed {seed})"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_model_passes_every_suite() {
        let lines = run_checks(3, None).unwrap();
        for l in &lines {
            assert!(l.passed, "{}: {}", l.name, l.detail);
        }
    }

    #[test]
    fn injected_defect_is_located() {
        let lines = run_checks(3, Some((2, 4))).unwrap();
        let jac = lines.iter().find(|l| l.name.starts_with("dynamics jacobian")).unwrap();
        assert!(!jac.passed);
        assert!(jac.detail.contains("dv'/dalpha (row 2, column 4)"), "{}", jac.detail);
    }
}
