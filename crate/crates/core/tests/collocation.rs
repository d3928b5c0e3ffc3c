use nalgebra::{DMatrix, DVector};
use ocpsens::collocation::{differentiation_matrix, lgr_nodes, CollocationGrid, Transcription};
use ocpsens::nlp::{NlpProblem, SolverConfig};
use ocpsens::toy;

fn solve_exp(intervals: usize, nodes: usize) -> f64 {
    let prob = toy::exponential_growth().unwrap();
    let tr = Transcription::new(prob, CollocationGrid::uniform(intervals, nodes).unwrap()).unwrap();
    let z0 = tr.pack_fn(|_| (vec![1.0], vec![]), &[]).unwrap();
    let sol = tr.solve(&z0, &SolverConfig::default()).unwrap();
    assert!(sol.converged());
    let last = sol.grid().num_points() - 1;
    (sol.x_point(last)[0] - std::f64::consts::E).abs()
}

#[test]
fn quadrature_exact_to_degree_2n_minus_2() {
    for n in 2..=8 {
        let (x, w) = lgr_nodes(n).unwrap();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..=(2 * n - 2) {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-12, "n={n} k={k}");
        }
    }
}

#[test]
fn differentiation_exact_for_polynomials_of_degree_n() {
    for n in 2..=8 {
        let (nodes, _) = lgr_nodes(n).unwrap();
        let mut s = vec![-1.0];
        s.extend(nodes);
        let d = differentiation_matrix(&s).unwrap();
        for i in 0..s.len() {
            assert!(d.row(i).sum().abs() < 1e-13);
        }
        for deg in 1..=n {
            let v = DVector::from_iterator(s.len(), s.iter().map(|x| x.powi(deg as i32)));
            let dv = &d * v;
            for i in 1..s.len() {
                let exact = deg as f64 * s[i].powi(deg as i32 - 1);
                assert!((dv[i] - exact).abs() < 1e-12, "n={n} deg={deg} err={}", dv[i] - exact);
            }
        }
    }
}

#[test]
fn exponential_reproduced_and_refinement_converges() {
    let e0 = solve_exp(4, 5);
    assert!(e0 < 1e-8, "error {e0:e}");
    // Coarser grids so the errors stay above round-off.
    let errs: Vec<f64> = [1, 2, 4].iter().map(|&k| solve_exp(k, 3)).collect();
    for w in errs.windows(2) {
        assert!(w[1] * 10.0 <= w[0], "{errs:?}");
    }
}

#[test]
fn zero_dynamics_gives_zero_control() {
    let prob = toy::control_energy_only().unwrap();
    let tr = Transcription::new(prob, CollocationGrid::uniform(3, 3).unwrap()).unwrap();
    let z0 = tr.pack_fn(|_| (vec![0.3], vec![0.7]), &[]).unwrap();
    let sol = tr.solve(&z0, &SolverConfig::default()).unwrap();
    assert!(sol.converged());
    assert!(sol.nlp.objective.abs() < 1e-14);
    for u in sol.u_nodes() {
        assert!(u[0].abs() < 1e-12);
    }
}

#[test]
fn double_integrator_matches_linear_control_oracle() {
    let rho = 1e3;
    let prob = toy::double_integrator(rho).unwrap();
    let tr = Transcription::new(prob, CollocationGrid::uniform(4, 5).unwrap()).unwrap();
    let z0 = tr.pack_fn(|_| (vec![0.0, 0.0], vec![0.0]), &[]).unwrap();
    let sol = tr.solve(&z0, &SolverConfig::default()).unwrap();
    assert!(sol.converged());

    // The optimal control is affine, u = a + b t; minimize the resulting
    // quadratic in (a, b) exactly.
    // x1(1) = a/2 + b/6, x2(1) = a + b/2, ∫u² = a² + ab + b²/3.
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0 / 3.0])
        + rho * (DMatrix::from_row_slice(2, 2, &[0.25, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 36.0])
            + DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.25]));
    let rhs = DVector::from_vec(vec![rho * 0.5, rho / 6.0]);
    let ab = m.lu().solve(&rhs).unwrap();
    let (a, b) = (ab[0], ab[1]);
    let x1 = a / 2.0 + b / 6.0;
    let x2 = a + b / 2.0;
    let obj = a * a + a * b + b * b / 3.0 + 0.5 * rho * ((x1 - 1.0).powi(2) + x2 * x2);
    assert!((sol.nlp.objective - obj).abs() < 1e-9 * obj.abs(), "{} vs {obj}", sol.nlp.objective);
    for p in 0..sol.grid().num_points() {
        let t = sol.transcription.point_time(p);
        let x = sol.x_point(p);
        let exact = a * t * t / 2.0 + b * t * t * t / 6.0;
        assert!((x[0] - exact).abs() < 1e-9, "t={t}");
    }
}

#[test]
fn interpolation_accuracy() {
    let g = CollocationGrid::uniform(4, 5).unwrap();
    let pts: Vec<f64> = (0..g.num_points()).map(|p| g.point_position(p)).collect();
    let cubic = |s: f64| 1.0 - 2.0 * s + 3.0 * s.powi(3);
    let poly: Vec<Vec<f64>> = pts.iter().map(|&s| vec![cubic(s)]).collect();
    let expv: Vec<Vec<f64>> = pts.iter().map(|&s| vec![s.exp()]).collect();
    let node_poly: Vec<Vec<f64>> = (0..g.num_nodes()).map(|k| vec![cubic(g.node_position(k))]).collect();
    for i in 0..4 {
        let mid = (i as f64 + 0.5) / 4.0;
        let v = g.interpolate_points(&poly, mid).unwrap()[0];
        assert!((v - cubic(mid)).abs() < 1e-12);
        let v = g.interpolate_nodes(&node_poly, mid).unwrap()[0];
        assert!((v - cubic(mid)).abs() < 1e-12);
        let v = g.interpolate_points(&expv, mid).unwrap()[0];
        assert!((v - mid.exp()).abs() < 1e-6);
    }
    assert!(g.interpolate_points(&poly, 1.01).is_err());
}

#[test]
fn constraint_count_and_fixed_pattern() {
    let prob = toy::double_integrator(10.0).unwrap();
    let tr = Transcription::new(prob, CollocationGrid::uniform(3, 4).unwrap()).unwrap();
    assert_eq!(tr.n_cons(), 2 * 12 + 2);
    let z1 = vec![0.0; tr.n_vars()];
    let z2: Vec<f64> = (0..tr.n_vars()).map(|i| (i as f64).sin()).collect();
    assert_eq!(tr.jacobian(&z1).pattern(), tr.jacobian(&z2).pattern());
    let y = vec![0.5; tr.n_cons()];
    assert_eq!(tr.hessian(&z1, 1.0, &y).pattern(), tr.hessian(&z2, 1.0, &y).pattern());
}
