use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ocpsens::adjoint::{
    lp_worst_case, qoi_directional_derivative, qoi_error_bound, qoi_error_estimate, solve_adjoint_system, ErrorBands,
};
use ocpsens::collocation::{CollocationGrid, CollocationSolution, Transcription};
use ocpsens::nlp::SolverConfig;
use ocpsens::ocp::{Bounds, ComponentFunction, FiniteDifferenceHessian, OcpProblem};
use ocpsens::sensitivity::{
    assemble_lq_data, forward_qoi_derivative, solve_sensitivity, LqData, PerturbationData, SensitivityError,
};
use ocpsens::toy::{self, ScalarMap, ScalarToy, StateMapComponent};
use proptest::prelude::*;

fn tight() -> SolverConfig {
    SolverConfig { kkt_tolerance: 1e-12, ..SolverConfig::default() }
}

fn solve(prob: OcpProblem, grid: CollocationGrid) -> CollocationSolution {
    let tr = Transcription::new(prob, grid).unwrap();
    let x0 = tr.prob.x0[0];
    let n_u = tr.layout.dims.n_u;
    let z0 = tr.pack_fn(|_| (vec![x0], vec![0.0; n_u]), &[]).unwrap();
    let sol = tr.solve(&z0, &tight()).unwrap();
    assert!(sol.converged(), "base solve did not converge");
    sol
}

/// `g + α δg`.
struct Shifted {
    base: Arc<dyn ComponentFunction>,
    dir: Arc<dyn ComponentFunction>,
    alpha: f64,
}

impl ComponentFunction for Shifted {
    fn n_g(&self) -> usize {
        self.base.n_g()
    }
    fn n_y(&self) -> usize {
        self.base.n_y()
    }
    fn value(&self, t: f64, y: &[f64]) -> DVector<f64> {
        self.base.value(t, y) + self.dir.value(t, y) * self.alpha
    }
    fn jacobian(&self, t: f64, y: &[f64]) -> DMatrix<f64> {
        self.base.jacobian(t, y) + self.dir.jacobian(t, y) * self.alpha
    }
    fn hessians(&self, t: f64, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.base.hessians(t, y).into_iter().zip(self.dir.hessians(t, y)).map(|(a, b)| a + b * self.alpha).collect()
    }
}

fn unit_perturbation(lq: &LqData) -> PerturbationData {
    let mut p = PerturbationData::zeros(lq);
    for v in &mut p.dg {
        v[0] = 1.0;
    }
    p
}

#[test]
fn linear_quadratic_sensitivity_matches_closed_form() {
    let sol = solve(toy::linear_quadratic(1.0, 0.3).unwrap(), CollocationGrid::uniform(8, 4).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let dz = solve_sensitivity(&lq, &unit_perturbation(&lq)).unwrap();
    let c1 = 1f64.cosh();
    let tr = &lq.transcription;
    for p in 0..tr.grid.num_points() {
        let t = tr.point_time(p);
        assert!((dz.dx[p][0] - t.sinh() / c1).abs() < 1e-7, "dx at t={t}");
    }
    for k in 0..lq.num_nodes() {
        let t = tr.node_time(k);
        assert!((dz.dlambda[k][0] - (1.0 - t.cosh() / c1)).abs() < 1e-6, "dlambda at t={t}");
    }
    let qoi = tr.prob.qoi.clone().unwrap();
    let dq = forward_qoi_derivative(&lq, &dz, &unit_perturbation(&lq), qoi.as_ref()).unwrap();
    assert!((dq - 1f64.tanh()).abs() < 1e-8);
}

#[test]
fn linear_quadratic_adjoint_matches_closed_form() {
    let sol = solve(toy::linear_quadratic(1.0, 0.3).unwrap(), CollocationGrid::uniform(8, 4).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let qoi = lq.transcription.prob.qoi.clone().unwrap();
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).unwrap();
    let c1 = 1f64.cosh();
    let tr = &lq.transcription;
    for k in 0..lq.num_nodes() {
        let t = tr.node_time(k);
        assert!((adj.dx[k + 1][0] + t.sinh() / c1).abs() < 1e-7, "adjoint x at t={t}");
        assert!((adj.dlambda[k][0] - t.cosh() / c1).abs() < 1e-6, "adjoint lambda at t={t}");
    }
    let dq = qoi_directional_derivative(&lq, &adj, &unit_perturbation(&lq), qoi.as_ref()).unwrap();
    assert!((dq - 1f64.tanh()).abs() < 1e-8);
}

/// Discrete solution difference quotient against the sensitivity, with the
/// remainder shrinking quadratically.
#[test]
fn sensitivity_matches_finite_difference_of_resolves() {
    let prob = toy::two_output().unwrap();
    let grid = CollocationGrid::uniform(4, 4).unwrap();
    let base = solve(prob.clone(), grid.clone());
    let lq = assemble_lq_data(&base).unwrap();
    let dir: Arc<dyn ComponentFunction> =
        Arc::new(StateMapComponent { maps: vec![ScalarMap::Sine, ScalarMap::Identity], n_y: 2 });
    let pert = PerturbationData::of(&lq, dir.as_ref());
    let dz = solve_sensitivity(&lq, &pert).unwrap();
    let remainder = |alpha: f64| {
        let g = Arc::new(Shifted { base: prob.g.clone(), dir: dir.clone(), alpha });
        let s = solve(prob.with_component(g).unwrap(), grid.clone());
        let mut worst: f64 = 0.0;
        for p in 0..grid.num_points() {
            worst = worst.max((s.x_point(p)[0] - base.x_point(p)[0] - alpha * dz.dx[p][0]).abs());
        }
        for k in 0..grid.num_nodes() {
            worst = worst.max((s.u_node(k)[0] - base.u_node(k)[0] - alpha * dz.du[k][0]).abs());
            worst = worst.max((s.lambda_node(k)[0] - base.lambda_node(k)[0] - alpha * dz.dlambda[k][0]).abs());
        }
        worst
    };
    let (r1, r2, r3) = (remainder(1e-2), remainder(5e-3), remainder(2.5e-3));
    assert!(r1 < 1e-3);
    for ratio in [r1 / r2, r2 / r3] {
        assert!((ratio - 4.0).abs() < 1.0, "remainder ratio {ratio}");
    }
}

#[test]
fn forward_and_adjoint_derivatives_agree() {
    let sol = solve(toy::two_output().unwrap(), CollocationGrid::uniform(5, 3).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let qoi = lq.transcription.prob.qoi.clone().unwrap();
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).unwrap();
    let dir = StateMapComponent { maps: vec![ScalarMap::Square, ScalarMap::Sine], n_y: 2 };
    let pert = PerturbationData::of(&lq, &dir);
    let dz = solve_sensitivity(&lq, &pert).unwrap();
    let fwd = forward_qoi_derivative(&lq, &dz, &pert, qoi.as_ref()).unwrap();
    let bwd = qoi_directional_derivative(&lq, &adj, &pert, qoi.as_ref()).unwrap();
    assert!((fwd - bwd).abs() <= 1e-10 * fwd.abs().max(1.0), "{fwd} vs {bwd}");
}

/// Enumerate every vertex of the band box on a 3-node grid and compare the
/// best value of the linear functional with the closed-form maximizer.
#[test]
fn worst_case_matches_vertex_enumeration() {
    let sol = solve(toy::two_output().unwrap(), CollocationGrid::uniform(1, 3).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let qoi = lq.transcription.prob.qoi.clone().unwrap();
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).unwrap();
    let eps = [0.1, 0.05];
    let eps_x = [0.02, 0.03];
    let bands = ErrorBands {
        eps: vec![DVector::from_row_slice(&eps); 3],
        eps_y: vec![DMatrix::from_row_slice(2, 2, &[eps_x[0], 0.0, eps_x[1], 0.0]); 3],
    };
    let mut best = f64::NEG_INFINITY;
    for bits in 0u32..(1 << 12) {
        let mut pert = PerturbationData::zeros(&lq);
        for k in 0..3 {
            for i in 0..2 {
                let s = |b: u32| if bits >> b & 1 == 1 { 1.0 } else { -1.0 };
                pert.dg[k][i] = s((4 * k + i) as u32) * eps[i];
                pert.dg_y[k][(i, 0)] = s((4 * k + 2 + i) as u32) * eps_x[i];
            }
        }
        best = best.max(qoi_directional_derivative(&lq, &adj, &pert, qoi.as_ref()).unwrap());
    }
    let lp = lp_worst_case(&lq, &adj, &bands, qoi.as_ref()).unwrap();
    assert!((lp.objective - best).abs() <= 1e-10 * best.abs(), "{} vs {best}", lp.objective);
    let attained = qoi_directional_derivative(&lq, &adj, &lp.perturbation, qoi.as_ref()).unwrap();
    assert!((attained - lp.objective).abs() <= 1e-12 * best.abs());
    let bound = qoi_error_bound(&lq, &adj, &bands, qoi.as_ref()).unwrap();
    assert_eq!(bound.to_bits(), lp.objective.to_bits());
}

#[test]
fn saddle_point_base_is_rejected() {
    // x = u = 0 is stationary but the running cost is concave in x with a
    // conjugate point inside the horizon.
    let funcs = ScalarToy { a: 0.0, g_weights: vec![0.0], control: true, q: -20.0, r: 1.0, s: 0.0, x_target: 0.0 };
    let g = toy::ConstantComponent { values: vec![0.0], n_y: 2 };
    let prob =
        OcpProblem::new(ocpsens::ocp::Horizon::Fixed { t0: 0.0, tf: 1.0 }, vec![0.0], Arc::new(funcs), Arc::new(g))
            .unwrap();
    let sol = solve(prob, CollocationGrid::uniform(4, 4).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let err = solve_sensitivity(&lq, &PerturbationData::zeros(&lq)).unwrap_err();
    assert!(matches!(err, SensitivityError::SsocViolation { .. }), "{err}");
}

#[test]
fn active_bound_is_refused() {
    let prob = toy::linear_quadratic(1.0, 0.0).unwrap();
    let mut bounds = Bounds::none(prob.dims);
    bounds.u_lower = vec![-0.1];
    let prob = prob.with_bounds(bounds).unwrap();
    let sol = solve(prob, CollocationGrid::uniform(4, 3).unwrap());
    match assemble_lq_data(&sol) {
        Err(SensitivityError::ActiveBound { bound, .. }) => assert!(bound.contains("lower bound of control 0")),
        other => panic!("expected an active bound, got {other:?}"),
    }
}

#[test]
fn finite_difference_hessians_are_refused() {
    let mut prob = toy::squared_state().unwrap();
    prob.funcs = Arc::new(FiniteDifferenceHessian::new(prob.funcs.clone()));
    let sol = solve(prob, CollocationGrid::uniform(2, 3).unwrap());
    assert!(matches!(assemble_lq_data(&sol), Err(SensitivityError::FiniteDifferenceDerivatives)));
}

fn two_output_setup() -> (LqData, ocpsens::adjoint::AdjointSolution, Arc<dyn ocpsens::ocp::Qoi>) {
    let sol = solve(toy::two_output().unwrap(), CollocationGrid::uniform(2, 3).unwrap());
    let lq = assemble_lq_data(&sol).unwrap();
    let qoi = lq.transcription.prob.qoi.clone().unwrap();
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).unwrap();
    (lq, adj, qoi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_is_homogeneous_and_dominates_estimates(
        scale in 0.0f64..10.0,
        raw in proptest::collection::vec(-1.0f64..1.0, 6 * 4),
    ) {
        let (lq, adj, qoi) = two_output_setup();
        let mut pert = PerturbationData::zeros(&lq);
        for k in 0..lq.num_nodes() {
            for i in 0..2 {
                pert.dg[k][i] = raw[4 * k + i];
                pert.dg_y[k][(i, 0)] = raw[4 * k + 2 + i];
            }
        }
        let bands = ErrorBands::from_perturbation(&pert);
        let b = qoi_error_bound(&lq, &adj, &bands, qoi.as_ref()).unwrap();
        let scaled = ErrorBands::from_perturbation(&pert.scaled(scale));
        let bs = qoi_error_bound(&lq, &adj, &scaled, qoi.as_ref()).unwrap();
        prop_assert!((bs - scale * b).abs() <= 1e-12 * (scale * b).max(1e-300));
        let est = qoi_error_estimate(&lq, &adj, &pert, qoi.as_ref()).unwrap();
        prop_assert!(est <= b * (1.0 + 1e-12) + 1e-300);
    }
}
