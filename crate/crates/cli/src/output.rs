//! Output files. CSV files start with a `#` metadata block; JSON reports
//! carry the same metadata as fields.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ocpsens::collocation::CollocationGrid;
use ocpsens::hypersonic::Reference;
use serde::{Deserialize, Serialize};

use crate::config::{GridConfig, RunConfig};
use crate::study::{DenseTrajectory, QoiRow, COMPONENTS};
use crate::CliError;

pub const TRAJECTORY_HEADER: &str = "t,x1,x2,v,gamma,alpha,q,delta";
pub const STUDY_HEADER: &str = "eps,estimate,true_error,bound";
pub const REFERENCE_FILE: &str = "reference.json";

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metadata(cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    writeln!(s, "# config_hash: {}", cfg.hash()).unwrap();
    writeln!(s, "# grid: {}", cfg.grid).unwrap();
    writeln!(s, "# units: {}", cfg.units).unwrap();
    writeln!(s, "# kkt_tolerance: {:e}", cfg.solver.kkt_tolerance).unwrap();
    writeln!(s, "# max_iterations: {}", cfg.solver.max_iterations).unwrap();
    for (k, v) in extra {
        writeln!(s, "# {k}: {v}").unwrap();
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn trajectory_csv(cfg: &RunConfig, series: &str, traj: &DenseTrajectory, eps: Option<f64>) -> String {
    let mut extra = vec![("series", series.to_string()), ("duration_T", num(traj.duration))];
    if let Some(e) = eps {
        extra.push(("eps", e.to_string()));
    }
    let mut s = metadata(cfg, &extra);
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for (t, row) in traj.times().zip(&traj.rows) {
        s.push_str(&num(t));
        for v in row {
            s.push(',');
            s.push_str(&num(*v));
        }
        s.push('\n');
    }
    s
}

pub fn study_csv(cfg: &RunConfig, rows: &[QoiRow]) -> String {
    let mut s = metadata(cfg, &[("qoi", "final downrange x1(T) [km]".into())]);
    s.push_str(STUDY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{},{}", r.eps, num(r.estimate), num(r.true_error), num(r.bound)).unwrap();
    }
    s
}

/// `(ε, reference deviation, predicted deviation)` per component.
pub fn deviation_csv(cfg: &RunConfig, rows: &[(f64, [f64; 7], [f64; 7])]) -> String {
    let mut s = metadata(cfg, &[("norm", "max over samples at equal normalized time".into())]);
    s.push_str("eps,component,reference_vs_truth,predicted_vs_truth\n");
    for (eps, r, p) in rows {
        for j in 0..7 {
            writeln!(s, "{eps},{},{},{}", COMPONENTS[j], num(r[j]), num(p[j])).unwrap();
        }
    }
    s
}

pub fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub status: String,
    pub converged: bool,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    #[serde(rename = "duration_T")]
    pub duration_t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub downrange_km: Option<f64>,
    pub grid: String,
    pub units: String,
    pub kkt_tolerance: f64,
    pub config_hash: String,
}

/// A reference trajectory stored in SI units on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub reference_hash: String,
    pub grid: GridConfig,
    pub duration: f64,
    pub x_points: Vec<Vec<f64>>,
    pub u_nodes: Vec<Vec<f64>>,
}

impl ReferenceFile {
    pub fn new(cfg: &RunConfig, reference: &Reference) -> Self {
        Self {
            reference_hash: cfg.reference_hash(),
            grid: cfg.grid,
            duration: reference.duration,
            x_points: reference.x_points.clone(),
            u_nodes: reference.u_nodes.clone(),
        }
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(REFERENCE_FILE)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(&Self::path(dir), &(text + "\n"))
    }

    /// Stored reference if it exists and was computed with the current
    /// grid, units and solver settings.
    pub fn load_matching(cfg: &RunConfig, dir: &Path) -> Result<Option<Reference>, CliError> {
        let path = Self::path(dir);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if file.reference_hash != cfg.reference_hash() {
            return Ok(None);
        }
        let grid: CollocationGrid = file.grid.build()?;
        Ok(Some(Reference::new(grid, file.x_points, file.u_nodes, file.duration)?))
    }
}
