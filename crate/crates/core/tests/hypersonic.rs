use std::sync::{Arc, OnceLock};

use ocpsens::adjoint::{qoi_directional_derivative, solve_adjoint_system};
use ocpsens::collocation::{CollocationGrid, CollocationSolution, Transcription};
use ocpsens::hypersonic::*;
use ocpsens::nlp::{NlpProblem, SolverConfig};
use ocpsens::ocp::ComponentFunction;
use ocpsens::sensitivity::{assemble_lq_data, forward_qoi_derivative, solve_sensitivity, PerturbationData};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEG: f64 = std::f64::consts::PI / 180.0;
const ALPHA_STATE: usize = 4;

struct Shared {
    grid: CollocationGrid,
    sol: CollocationSolution,
    reference: Arc<Reference>,
}

fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = CollocationGrid::uniform(32, 4).unwrap();
        let (sol, scaling) = solve_max_downrange(
            &VehicleParams::default(),
            AeroModel::Surrogate,
            grid.clone(),
            UnitScheme::KgKmS,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(sol.converged(), "{:?}", sol.nlp.status);
        let reference = Arc::new(Reference::from_solution(&sol, &scaling).unwrap());
        Shared { grid, sol, reference }
    })
}

fn initial_array() -> [f64; N_X] {
    initial_state().try_into().unwrap()
}

// Values from a separate double-precision evaluation of the six formulas.
#[test]
fn rhs_at_initial_condition_matches_hand_evaluation() {
    let cases = [
        (
            0.0,
            [
                4980.973490458728,
                -435.77871373829083,
                0.8051322537020829,
                -0.0011152932531994803,
                0.0011152932531994803,
                -0.2348021178639533,
            ],
        ),
        (
            0.05,
            [
                4980.973490458728,
                -435.77871373829083,
                0.8057771629740305,
                -0.0011140955645515776,
                0.0011140955645515776,
                -0.9061940724653539,
            ],
        ),
    ];
    for (delta, hand) in cases {
        let f = hypersonic_dynamics(&VehicleParams::default(), AeroModel::Surrogate, &initial_array(), delta).unwrap();
        for i in 0..N_X {
            assert!((f[i] - hand[i]).abs() <= 1e-10 * hand[i].abs().max(1.0), "δ = {delta}, entry {i}: {} vs {}", f[i], hand[i]);
        }
    }
}

#[test]
fn truth_at_zero_is_bit_identical_to_surrogate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let alpha = rng.random_range(-0.5..0.5);
        let delta = rng.random_range(-0.5..0.5);
        assert_eq!(
            aero_coeffs(AeroModel::Truth { eps: 0.0 }, alpha, delta),
            aero_coeffs(AeroModel::Surrogate, alpha, delta)
        );
        let mut x = initial_array();
        x[ALPHA_STATE] = alpha;
        let a = hypersonic_dynamics(&VehicleParams::default(), AeroModel::Truth { eps: 0.0 }, &x, delta).unwrap();
        let b = hypersonic_dynamics(&VehicleParams::default(), AeroModel::Surrogate, &x, delta).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truth_coefficients_are_exact_multiples(alpha in -0.5f64..0.5, delta in -0.5f64..0.5, eps in -0.2f64..0.2) {
        let s = aero_coeffs(AeroModel::Surrogate, alpha, delta).value;
        let t = aero_coeffs(AeroModel::Truth { eps }, alpha, delta).value;
        prop_assert_eq!(t[0], (1.0 + eps) * s[0]);
        prop_assert_eq!(t[1], (1.0 - eps) * s[1]);
        prop_assert_eq!(t[2], (1.0 + eps) * s[2]);
    }

    #[test]
    fn coefficient_partials_match_central_differences(alpha in -0.5f64..0.5, delta in -0.5f64..0.5, eps in 0.0f64..0.1) {
        let model = AeroModel::Truth { eps };
        let c = aero_coeffs(model, alpha, delta);
        let h = 1e-5;
        let (ap, am) = (aero_coeffs(model, alpha + h, delta).value, aero_coeffs(model, alpha - h, delta).value);
        let (dp, dm) = (aero_coeffs(model, alpha, delta + h).value, aero_coeffs(model, alpha, delta - h).value);
        for i in 0..3 {
            prop_assert!(((ap[i] - am[i]) / (2.0 * h) - c.d_alpha[i]).abs() < 1e-6);
            prop_assert!(((dp[i] - dm[i]) / (2.0 * h) - c.d_delta[i]).abs() < 1e-6);
            prop_assert!(((ap[i] - 2.0 * c.value[i] + am[i]) / (h * h) - c.d_alpha2[i]).abs() < 1e-4);
            prop_assert!(((dp[i] - 2.0 * c.value[i] + dm[i]) / (h * h) - c.d_delta2[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn component_jacobian_matches_central_differences(alpha in -0.5f64..0.5, delta in -0.5f64..0.5) {
        let g = AeroComponent { model: AeroModel::Truth { eps: 0.05 } };
        let mut y = [10.0, 30000.0, 4000.0, -0.1, alpha, 0.01, delta, 1500.0];
        let jac = g.jacobian(0.3, &y);
        let h = 1e-6;
        for j in 0..N_Y {
            let step = h * y[j].abs().max(1.0);
            let y0 = y[j];
            y[j] = y0 + step;
            let fp = g.value(0.3, &y);
            y[j] = y0 - step;
            let fm = g.value(0.3, &y);
            y[j] = y0;
            for i in 0..3 {
                prop_assert!(((fp[i] - fm[i]) / (2.0 * step) - jac[(i, j)]).abs() < 1e-6, "entry ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn unit_scaling_round_trips(x in proptest::collection::vec(-1e5f64..1e5, N_X), u in -1.0f64..1.0, p in 1000.0f64..3000.0) {
        for scheme in [UnitScheme::Si, UnitScheme::KgKmS] {
            let s = UnitScaling::new(scheme);
            let back = s.unscale_x(&s.scale_x(&x));
            for i in 0..N_X {
                prop_assert!((back[i] - x[i]).abs() <= 1e-14 * x[i].abs().max(1.0));
            }
            prop_assert!((s.unscale_u(&s.scale_u(&[u]))[0] - u).abs() <= 1e-14);
            prop_assert!((s.unscale_p(&s.scale_p(&[p]))[0] - p).abs() <= 1e-14 * p);
        }
    }
}

#[test]
fn max_downrange_problem_record() {
    let prob = build_max_downrange(&VehicleParams::default(), AeroModel::Surrogate).unwrap();
    assert_eq!(prob.x0, vec![0.0, 80000.0, 5000.0, -5.0 * DEG, 11.0 * DEG, 0.0]);
    assert_eq!(prob.bounds.p_lower, vec![1000.0]);
    assert_eq!(prob.bounds.p_upper, vec![3000.0]);
    assert_eq!(prob.bounds.u_lower, vec![-20.0 * DEG]);
    assert_eq!(prob.bounds.x_upper[1], 81000.0);
    assert!(prob.qoi.is_some());
}

#[test]
fn tracking_problem_has_no_inequalities() {
    let reference = shared().reference.clone();
    let prob = build_tracking(&VehicleParams::default(), AeroModel::Surrogate, reference, TrackingWeights::default()).unwrap();
    assert!(prob.bounds.is_unbounded());
    let w = TrackingWeights::default();
    assert_eq!(w.q, [1e-3, 1e1, 0.0, 0.0, 1e1, 0.0]);
    assert_eq!((w.r_u, w.r_p), (1e8, 1e-3));
}

#[test]
fn reference_respects_box_constraints_and_collocation() {
    let s = shared();
    let b = box_bounds();
    let tol = 1e-6;
    for x in &s.reference.x_points {
        for (i, xi) in x.iter().enumerate() {
            let scale = b.x_upper[i].abs().clamp(1.0, 1e4);
            assert!(*xi >= b.x_lower[i] - tol * scale && *xi <= b.x_upper[i] + tol * scale, "state {i} = {xi}");
        }
    }
    for u in &s.reference.u_nodes {
        assert!(u[0] >= b.u_lower[0] - tol && u[0] <= b.u_upper[0] + tol);
    }
    assert!((1000.0..=3000.0).contains(&s.reference.duration));
    assert!(s.sol.transcription.max_defect(s.sol.z()) < 1e-8);
    assert!(s.sol.nlp.kkt_residual < 1e-8);
    assert!(s.reference.downrange() > 0.0);
}

#[test]
fn tracking_with_surrogate_recovers_the_reference() {
    let s = shared();
    let (sol, scaling) = solve_tracking(
        &VehicleParams::default(),
        AeroModel::Surrogate,
        s.reference.clone(),
        s.grid.clone(),
        UnitScheme::KgKmS,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(sol.converged());
    assert!(sol.nlp.objective.abs() < 1e-8, "{}", sol.nlp.objective);
    let worst = sol
        .u_nodes()
        .iter()
        .zip(&s.reference.u_nodes)
        .map(|(u, r)| (scaling.unscale_u(u)[0] - r[0]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    assert!((scaling.unscale_p(&sol.params())[0] - s.reference.duration).abs() < 1e-6);
}

#[test]
fn truth_model_makes_the_reference_suboptimal() {
    let s = shared();
    let prob = build_tracking(&VehicleParams::default(), AeroModel::Truth { eps: 0.05 }, s.reference.clone(), TrackingWeights::default())
        .unwrap();
    let (prob, scaling) = unit_scaling(&prob, UnitScheme::KgKmS).unwrap();
    let tr = Transcription::new(prob, s.grid.clone()).unwrap();
    let z = tr
        .pack_fn(
            |tau| {
                (
                    scaling.scale_x(&s.reference.state_at(tau).unwrap()),
                    scaling.scale_u(&s.reference.control_at(tau).unwrap()),
                )
            },
            &scaling.scale_p(&[s.reference.duration]),
        )
        .unwrap();
    // The reference still tracks itself exactly; the truth model shows up as
    // a violated collocation defect, which the re-solve must trade off.
    assert!(tr.objective(&z).abs() < 1e-12);
    assert!(tr.max_defect(&z) > 1e-6);
    let (truth, _) = solve_tracking(
        &VehicleParams::default(),
        AeroModel::Truth { eps: 0.05 },
        s.reference.clone(),
        s.grid.clone(),
        UnitScheme::KgKmS,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(truth.converged());
    assert!(truth.nlp.objective > 0.0);
}

#[test]
fn downrange_agrees_across_unit_schemes() {
    let s = shared();
    let (si, si_scaling) = solve_max_downrange(
        &VehicleParams::default(),
        AeroModel::Surrogate,
        s.grid.clone(),
        UnitScheme::Si,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(si.converged(), "{:?}", si.nlp.status);
    let si_ref = Reference::from_solution(&si, &si_scaling).unwrap();
    let (a, b) = (si_ref.downrange(), s.reference.downrange());
    assert!((a - b).abs() <= 1e-6 * b.abs(), "{a} vs {b}");
}

#[test]
fn forward_and_adjoint_qoi_derivatives_agree() {
    let s = shared();
    let (base, _) = solve_tracking(
        &VehicleParams::default(),
        AeroModel::Surrogate,
        s.reference.clone(),
        s.grid.clone(),
        UnitScheme::KgKmS,
        &SolverConfig::default(),
    )
    .unwrap();
    let lq = assemble_lq_data(&base).unwrap();
    let qoi = lq.transcription.prob.qoi.clone().unwrap();
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).unwrap();
    let truth = build_tracking(&VehicleParams::default(), AeroModel::Truth { eps: 0.05 }, s.reference.clone(), TrackingWeights::default())
        .unwrap();
    let (truth, _) = unit_scaling(&truth, UnitScheme::KgKmS).unwrap();
    let pert = PerturbationData::between(&lq, truth.g.as_ref(), lq.transcription.prob.g.as_ref());
    let dz = solve_sensitivity(&lq, &pert).unwrap();
    let fwd = forward_qoi_derivative(&lq, &dz, &pert, qoi.as_ref()).unwrap();
    let bwd = qoi_directional_derivative(&lq, &adj, &pert, qoi.as_ref()).unwrap();
    assert!(fwd.abs() > 1.0);
    assert!((fwd - bwd).abs() <= 1e-8 * fwd.abs(), "{fwd} vs {bwd}");
}
