//! Experiment runner for the hypersonic surrogate-error study.
//!
//! Commands read a TOML [`RunConfig`], write plot-ready CSV and JSON files
//! into the output directory and return their results for programmatic use.

pub mod check;
pub mod config;
pub mod output;
pub mod study;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ocpsens::collocation::{CollocationError, Transcription};
use ocpsens::hypersonic::{HypersonicError, Reference};
use ocpsens::nlp::NlpError;
use ocpsens::ocp::OcpError;
use ocpsens::sensitivity::SensitivityError;
use ocpsens::toy;
use rayon::prelude::*;

pub use check::{run_checks, CheckLine};
pub use config::{GridConfig, ProblemKind, RunConfig};
use output::{eps_tag, write_file, ReferenceFile, SolveReport};
pub use study::{DenseTrajectory, Prediction, QoiRow, Study};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("sensitivity assembly failed: {0}")]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Hypersonic(#[from] HypersonicError),
    #[error(transparent)]
    Collocation(#[from] CollocationError),
    #[error(transparent)]
    Problem(#[from] OcpError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
}

impl CliError {
    /// 2 for configuration and usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub eps: Option<Vec<f64>>,
    pub grid: Option<GridConfig>,
    pub units: Option<String>,
}

pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &ov.out {
        cfg.output_dir = out.clone();
    }
    if let Some(eps) = &ov.eps {
        cfg.eps = eps.clone();
    }
    if let Some(grid) = ov.grid {
        cfg.grid = grid;
    }
    if let Some(units) = &ov.units {
        cfg.units = units.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_json(report: &SolveReport) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))? + "\n")
}

fn require_hypersonic(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.problem == ProblemKind::ToyLq {
        return Err(CliError::Config("this command needs problem = \"max-downrange\" or \"tracking\"".into()));
    }
    Ok(())
}

fn solve_and_store_reference(cfg: &RunConfig) -> Result<(Reference, SolveReport), CliError> {
    let grid = cfg.grid.build()?;
    let (sol, scaling) = study::solve_reference(grid, cfg.scheme()?, &cfg.solver_config())?;
    let duration = scaling.unscale_p(&sol.params())[0];
    let xf = scaling.unscale_x(&sol.x_point(sol.grid().num_points() - 1));
    let report = SolveReport {
        problem: "max-downrange".into(),
        status: format!("{:?}", sol.nlp.status),
        converged: sol.converged(),
        objective: sol.nlp.objective,
        kkt_residual: sol.nlp.kkt_residual,
        iterations: sol.nlp.iterations,
        duration_t: duration,
        downrange_km: Some(xf[0] * 1e-3),
        grid: cfg.grid.to_string(),
        units: cfg.units.clone(),
        kkt_tolerance: cfg.solver.kkt_tolerance,
        config_hash: cfg.hash(),
    };
    if !sol.converged() {
        write_file(&cfg.output_dir.join("solution.json"), &report_json(&report)?)?;
        return Err(CliError::Solver(format!(
            "max-downrange solve ended with {} after {} iterations (KKT residual {:e}); report written",
            report.status, report.iterations, report.kkt_residual
        )));
    }
    let reference = Reference::from_solution(&sol, &scaling)?;
    ReferenceFile::new(cfg, &reference).write(&cfg.output_dir)?;
    Ok((reference, report))
}

/// Stored reference for the current settings, solving it first if needed.
pub fn ensure_reference(cfg: &RunConfig) -> Result<Arc<Reference>, CliError> {
    if let Some(r) = ReferenceFile::load_matching(cfg, &cfg.output_dir)? {
        return Ok(Arc::new(r));
    }
    Ok(Arc::new(solve_and_store_reference(cfg)?.0))
}

/// `solve-reference`: solve the configured problem and write its report.
pub fn cmd_solve_reference(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    let out = &cfg.output_dir;
    let report = match cfg.problem {
        ProblemKind::MaxDownrange => {
            let (reference, report) = solve_and_store_reference(cfg)?;
            let traj = DenseTrajectory::from_reference(&reference)?;
            write_file(&out.join("reference.csv"), &output::trajectory_csv(cfg, "reference", &traj, None))?;
            report
        }
        ProblemKind::Tracking => {
            let reference = ensure_reference(cfg)?;
            let study = Study::new(reference, cfg.grid.build()?, cfg.scheme()?, cfg.solver_config())?;
            let traj = DenseTrajectory::from_solution(&study.base, &study.scaling)?;
            write_file(&out.join("tracking.csv"), &output::trajectory_csv(cfg, "tracking", &traj, None))?;
            SolveReport {
                problem: "tracking".into(),
                status: format!("{:?}", study.base.nlp.status),
                converged: study.base.converged(),
                objective: study.base.nlp.objective,
                kkt_residual: study.base.nlp.kkt_residual,
                iterations: study.base.nlp.iterations,
                duration_t: traj.duration,
                downrange_km: Some(study.downrange(&study.base)),
                grid: cfg.grid.to_string(),
                units: cfg.units.clone(),
                kkt_tolerance: cfg.solver.kkt_tolerance,
                config_hash: cfg.hash(),
            }
        }
        ProblemKind::ToyLq => {
            let tr = Transcription::new(toy::linear_quadratic(1.0, 0.0)?, cfg.grid.build()?)?;
            let z0 = tr.pack_fn(|_| (vec![1.0], vec![0.0]), &[])?;
            let sol = tr.solve(&z0, &cfg.solver_config())?;
            let (t0, tf) = tr.horizon();
            SolveReport {
                problem: "toy-lq".into(),
                status: format!("{:?}", sol.nlp.status),
                converged: sol.converged(),
                objective: sol.nlp.objective,
                kkt_residual: sol.nlp.kkt_residual,
                iterations: sol.nlp.iterations,
                duration_t: tf - t0,
                downrange_km: None,
                grid: cfg.grid.to_string(),
                units: "si".into(),
                kkt_tolerance: cfg.solver.kkt_tolerance,
                config_hash: cfg.hash(),
            }
        }
    };
    write_file(&out.join("solution.json"), &report_json(&report)?)?;
    if !report.converged {
        return Err(CliError::Solver(format!("{} solve ended with {}; report written", report.problem, report.status)));
    }
    Ok(report)
}

fn study_for(cfg: &RunConfig) -> Result<Study, CliError> {
    require_hypersonic(cfg)?;
    let reference = ensure_reference(cfg)?;
    Study::new(reference, cfg.grid.build()?, cfg.scheme()?, cfg.solver_config())
}

/// `sensitivity-predict`: reference, predicted and re-solved truth
/// trajectories per `ε`, plus their deviations.
pub fn cmd_sensitivity_predict(cfg: &RunConfig) -> Result<Vec<Prediction>, CliError> {
    let study = study_for(cfg)?;
    let preds: Vec<Prediction> = cfg.eps.par_iter().map(|&e| study.prediction(e)).collect::<Result<_, _>>()?;
    let out = &cfg.output_dir;
    let reference = DenseTrajectory::from_reference(&study.reference)?;
    write_file(&out.join("reference.csv"), &output::trajectory_csv(cfg, "reference", &reference, None))?;
    let mut rows = Vec::new();
    for p in &preds {
        let tag = eps_tag(p.eps);
        write_file(
            &out.join(format!("predicted_{tag}.csv")),
            &output::trajectory_csv(cfg, "sensitivity prediction", &p.predicted, Some(p.eps)),
        )?;
        write_file(
            &out.join(format!("truth_{tag}.csv")),
            &output::trajectory_csv(cfg, "re-solved truth", &p.truth, Some(p.eps)),
        )?;
        rows.push((p.eps, p.reference_deviation(), p.predicted_deviation()));
    }
    write_file(&out.join("prediction_deviation.csv"), &output::deviation_csv(cfg, &rows))?;
    Ok(preds)
}

/// `qoi-study`: adjoint estimate, re-solve error and bound per `ε`.
pub fn cmd_qoi_study(cfg: &RunConfig) -> Result<Vec<QoiRow>, CliError> {
    let study = study_for(cfg)?;
    let rows = study.qoi_table(&cfg.eps)?;
    write_file(&cfg.output_dir.join("qoi_study.csv"), &output::study_csv(cfg, &rows))?;
    Ok(rows)
}

/// `check`: self-test suites; `defect` injects a dynamics Jacobian error.
pub fn cmd_check(cfg: &RunConfig, defect: Option<(usize, usize)>) -> Result<Vec<CheckLine>, CliError> {
    run_checks(cfg.seed, defect)
}
