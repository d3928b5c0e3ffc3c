//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use ocpsens::adjoint::{lp_worst_case, qoi_directional_derivative, qoi_error_bound, solve_adjoint_system, ErrorBands};
use ocpsens::collocation::{CollocationGrid, Transcription};
use ocpsens::hypersonic::{AeroModel, Reference};
use ocpsens::nlp::SolverConfig;
use ocpsens::sensitivity::{assemble_lq_data, PerturbationData};
use ocpsens::{toy, DMatrix, DVector};
use ocpsens_cli::check::{differentiation_error, quadrature_error};
use ocpsens_cli::study::solve_reference;
use ocpsens_cli::{QoiRow, RunConfig, Study};

type Outcome = Result<(bool, String), String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn record(&mut self, id: usize, name: &str, started: Instant, outcome: Outcome) {
        let secs = started.elapsed().as_secs_f64();
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            self.failures += 1;
        }
        println!("[{}] {id:>2}. {name}: {detail} ({secs:.1} s)", if ok { "PASS" } else { "FAIL" });
    }
}

fn tight() -> SolverConfig {
    SolverConfig { kkt_tolerance: 1e-12, ..SolverConfig::default() }
}

fn quadrature_and_differentiation() -> Outcome {
    let mut q: f64 = 0.0;
    let mut d: f64 = 0.0;
    for n in 2..=8 {
        q = q.max(quadrature_error(n).map_err(|e| e.to_string())?);
        d = d.max(differentiation_error(n).map_err(|e| e.to_string())?);
    }
    Ok((q < 1e-12 && d < 1e-12, format!("n = 2..8, quadrature error {q:.1e}, differentiation error {d:.1e} (< 1e-12)")))
}

fn exp_error(intervals: usize, nodes: usize) -> Result<f64, String> {
    let prob = toy::exponential_growth().map_err(|e| e.to_string())?;
    let grid = CollocationGrid::uniform(intervals, nodes).map_err(|e| e.to_string())?;
    let tr = Transcription::new(prob, grid).map_err(|e| e.to_string())?;
    let z0 = tr.pack_fn(|_| (vec![1.0], vec![]), &[]).map_err(|e| e.to_string())?;
    let sol = tr.solve(&z0, &tight()).map_err(|e| e.to_string())?;
    if !sol.converged() {
        return Err(format!("x' = x solve on {intervals}x{nodes} did not converge"));
    }
    Ok((sol.x_point(sol.grid().num_points() - 1)[0] - std::f64::consts::E).abs())
}

/// The 4x5 error is already at round-off, so the halving sequence runs
/// up to that mesh: 1x5, 2x5, 4x5.
fn ode_transcription() -> Outcome {
    let e = [exp_error(1, 5)?, exp_error(2, 5)?, exp_error(4, 5)?];
    let halvings = [e[0] / e[1], e[1] / e[2]];
    let ok = e[2] < 1e-8 && halvings.iter().all(|r| *r >= 10.0);
    Ok((
        ok,
        format!(
            "|x(1) - e| on 4x5 = {:.2e} (< 1e-8); 1x5 = {:.2e}, 2x5 = {:.2e}; reduction per halving {:.1}, {:.1} (>= 10)",
            e[2], e[0], e[1], halvings[0], halvings[1]
        ),
    ))
}

fn vertex_enumeration() -> Result<(f64, f64), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let prob = toy::two_output().map_err(|e| err(&e))?;
    let tr = Transcription::new(prob, CollocationGrid::uniform(1, 3).map_err(|e| err(&e))?).map_err(|e| err(&e))?;
    let x0 = tr.prob.x0[0];
    let n_u = tr.layout.dims.n_u;
    let z0 = tr.pack_fn(|_| (vec![x0], vec![0.0; n_u]), &[]).map_err(|e| err(&e))?;
    let sol = tr.solve(&z0, &tight()).map_err(|e| err(&e))?;
    let lq = assemble_lq_data(&sol).map_err(|e| err(&e))?;
    let qoi = lq.transcription.prob.qoi.clone().ok_or("toy problem has no QoI")?;
    let adj = solve_adjoint_system(&lq, qoi.as_ref()).map_err(|e| err(&e))?;
    let eps = [0.1, 0.05];
    let eps_x = [0.02, 0.03];
    let bands = ErrorBands {
        eps: vec![DVector::from_row_slice(&eps); 3],
        eps_y: vec![DMatrix::from_row_slice(2, 2, &[eps_x[0], 0.0, eps_x[1], 0.0]); 3],
    };
    let mut best = f64::NEG_INFINITY;
    for bits in 0u32..(1 << 12) {
        let s = |b: usize| if bits >> b & 1 == 1 { 1.0 } else { -1.0 };
        let mut pert = PerturbationData::zeros(&lq);
        for k in 0..3 {
            for i in 0..2 {
                pert.dg[k][i] = s(4 * k + i) * eps[i];
                pert.dg_y[k][(i, 0)] = s(4 * k + 2 + i) * eps_x[i];
            }
        }
        best = best.max(qoi_directional_derivative(&lq, &adj, &pert, qoi.as_ref()).map_err(|e| err(&e))?);
    }
    let lp = lp_worst_case(&lq, &adj, &bands, qoi.as_ref()).map_err(|e| err(&e))?;
    let bound = qoi_error_bound(&lq, &adj, &bands, qoi.as_ref()).map_err(|e| err(&e))?;
    if bound.to_bits() != lp.objective.to_bits() {
        return Err(format!("bound {bound:e} differs from the LP objective {:e}", lp.objective));
    }
    Ok((lp.objective, best))
}

fn main() -> ExitCode {
    let all = Instant::now();
    let mut suite = Suite { failures: 0 };
    let cfg = RunConfig::default();
    let eps_list = cfg.eps.clone();
    println!(
        "acceptance suite: grid {}, units {}, KKT tolerance {:e}, eps {:?}",
        cfg.grid, cfg.units, cfg.solver.kkt_tolerance, eps_list
    );

    let t = Instant::now();
    suite.record(1, "quadrature and differentiation exactness", t, quadrature_and_differentiation());

    let t = Instant::now();
    suite.record(2, "ODE transcription of x' = x", t, ode_transcription());

    // Shared hypersonic setup.
    let t = Instant::now();
    let setup = (|| -> Result<_, String> {
        let grid = cfg.grid.build().map_err(|e| e.to_string())?;
        let scheme = cfg.scheme().map_err(|e| e.to_string())?;
        let (sol, scaling) = solve_reference(grid.clone(), scheme, &cfg.solver_config()).map_err(|e| e.to_string())?;
        let reference = Reference::from_solution(&sol, &scaling).map_err(|e| e.to_string())?;
        let study = Study::new(reference.into(), grid, scheme, cfg.solver_config()).map_err(|e| e.to_string())?;
        let truth = study.solve_with(AeroModel::Truth { eps: 0.05 }, &cfg.solver_config()).map_err(|e| e.to_string())?;
        Ok((sol, study, truth))
    })();
    let (reference_sol, study, truth) = match setup {
        Ok(s) => s,
        Err(e) => {
            for (id, name) in (3..=10).zip([
                "optimality of the hypersonic solves",
                "forward-adjoint duality",
                "sensitivity Taylor remainder",
                "estimate linear in eps",
                "estimate accuracy",
                "bound validity and tightness",
                "trajectory prediction",
                "determinism of qoi-study",
            ]) {
                suite.record(id, name, t, Err(format!("hypersonic setup failed: {e}")));
            }
            return ExitCode::FAILURE;
        }
    };
    let kkt = [reference_sol.nlp.kkt_residual, study.base.nlp.kkt_residual, truth.nlp.kkt_residual];
    let obj = study.base.nlp.objective;
    suite.record(
        3,
        "optimality of the hypersonic solves",
        t,
        Ok((
            kkt.iter().all(|k| *k < 1e-8) && obj < 1e-8,
            format!(
                "KKT residual max-downrange {:.1e}, tracking (surrogate) {:.1e}, tracking (truth 0.05) {:.1e} (< 1e-8); tracking objective with the surrogate {obj:.1e} (< 1e-8)",
                kkt[0], kkt[1], kkt[2]
            ),
        )),
    );

    let t = Instant::now();
    let outcome = study.duality_pairs(cfg.seed, 10).map_err(|e| e.to_string()).map(|pairs| {
        let worst = pairs.iter().map(|(f, b)| (f - b).abs() / f.abs().max(b.abs())).fold(0.0, f64::max);
        (worst < 1e-6, format!("10 seeded random directions, max relative difference {worst:.2e} (< 1e-6)"))
    });
    suite.record(4, "forward-adjoint duality on the tracking problem", t, outcome);

    let t = Instant::now();
    let steps = [1e-2, 5e-3, 2.5e-3];
    let resolve = SolverConfig { kkt_tolerance: 1e-10, ..SolverConfig::default() };
    let outcome = study.taylor_remainders(0.05, &steps, &resolve).map_err(|e| e.to_string()).map(|r| {
        let ratios = [r[0] / r[1], r[1] / r[2]];
        let ok = ratios.iter().all(|q| (q - 4.0).abs() <= 0.25 * 4.0);
        (
            ok,
            format!(
                "eps = 0.05, remainders {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3} (4 +/- 25%)",
                r[0], r[1], r[2], ratios[0], ratios[1]
            ),
        )
    });
    suite.record(5, "sensitivity Taylor remainder", t, outcome);

    let t = Instant::now();
    let table: Result<Vec<QoiRow>, String> = study.qoi_table(&eps_list).map_err(|e| e.to_string());
    let outcome = table.as_ref().map_err(|e| e.clone()).map(|rows| {
        let slopes: Vec<f64> = rows.iter().map(|r| r.estimate / r.eps).collect();
        let spread = slopes.iter().map(|s| (s - slopes[0]).abs() / slopes[0].abs()).fold(0.0, f64::max);
        (spread < 1e-10, format!("estimate/eps = {:.10e} km, max relative spread {spread:.1e} (< 1e-10)", slopes[0]))
    });
    suite.record(6, "estimate linear in eps", t, outcome);

    let t = Instant::now();
    let outcome = table.as_ref().map_err(|e| e.clone()).map(|rows| {
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        let dev: Vec<f64> = sorted.iter().map(|r| (r.estimate - r.true_error).abs()).collect();
        let monotone = dev.windows(2).all(|w| w[0] < w[1]);
        match sorted.iter().zip(&dev).find(|(r, _)| r.eps == 0.05) {
            Some((r, d)) => {
                let rel = d / r.true_error;
                (
                    rel < 0.30 && monotone,
                    format!(
                        "at eps = 0.05 estimate {:.4} km, true error {:.4} km, relative deviation {rel:.4} (< 0.30); deviation decreases with eps: {monotone}",
                        r.estimate, r.true_error
                    ),
                )
            }
            None => (false, "eps = 0.05 not in the sweep".into()),
        }
    });
    suite.record(7, "estimate accuracy", t, outcome);

    let t = Instant::now();
    let outcome = table.as_ref().map_err(|e| e.clone()).and_then(|rows| {
        let ordered = rows.iter().all(|r| r.bound >= r.estimate);
        let margin = rows.iter().map(|r| r.bound / r.estimate).fold(f64::INFINITY, f64::min);
        let (lp, best) = vertex_enumeration()?;
        let agree = (lp - best).abs() <= 1e-10 * best.abs().max(1.0);
        Ok((
            ordered && agree,
            format!(
                "bound >= estimate on all {} rows (min ratio {margin:.6}); toy LP {lp:.12e} vs enumeration of 4096 sign patterns {best:.12e}",
                rows.len()
            ),
        ))
    });
    suite.record(8, "bound validity and tightness", t, outcome);

    let t = Instant::now();
    let outcome = study.prediction(0.05).map_err(|e| e.to_string()).map(|p| {
        let (r, q) = (p.reference_deviation(), p.predicted_deviation());
        let idx = [(0, "x1"), (1, "x2"), (6, "delta")];
        let ok = idx.iter().all(|&(i, _)| q[i] < r[i]);
        let parts: Vec<String> =
            idx.iter().map(|&(i, n)| format!("{n} {:.3e} < {:.3e}", q[i], r[i])).collect();
        (ok, format!("eps = 0.05, max|predicted - truth| vs max|reference - truth|: {}", parts.join(", ")))
    });
    suite.record(9, "trajectory prediction", t, outcome);

    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = dir.path().join("study");
        let mut runs = Vec::new();
        for _ in 0..2 {
            let status = Command::new(env!("CARGO_BIN_EXE_ocpsens"))
                .args(["qoi-study", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("qoi-study failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            runs.push(std::fs::read(out.join("qoi_study.csv")).map_err(|e| e.to_string())?);
        }
        let same = runs[0] == runs[1];
        Ok((same, format!("two consecutive qoi-study runs, CSVs byte-identical: {same} ({} bytes)", runs[0].len())))
    })();
    suite.record(10, "determinism of qoi-study", t, outcome);

    println!(
        "{} of 10 criteria passed in {:.1} s",
        10 - suite.failures,
        all.elapsed().as_secs_f64()
    );
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
