use std::path::{Path, PathBuf};

use ocpsens::collocation::CollocationGrid;
use ocpsens::hypersonic::UnitScheme;
use ocpsens::nlp::SolverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    MaxDownrange,
    Tracking,
    ToyLq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub intervals: usize,
    pub nodes: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<CollocationGrid, CliError> {
        CollocationGrid::uniform(self.intervals, self.nodes)
            .map_err(|e| CliError::Config(format!("grid {}: {e}", self)))
    }
}

impl std::fmt::Display for GridConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.intervals, self.nodes)
    }
}

impl std::str::FromStr for GridConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('x').ok_or_else(|| format!("expected <intervals>x<nodes>, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Self { intervals: parse(a)?, nodes: parse(b)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { kkt_tolerance: 1e-8, max_iterations: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub grid: GridConfig,
    pub solver: SolverSettings,
    pub eps: Vec<f64>,
    /// `"si"` or `"kgkms"`.
    pub units: String,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::MaxDownrange,
            grid: GridConfig { intervals: 32, nodes: 4 },
            solver: SolverSettings::default(),
            eps: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            units: "kgkms".into(),
            output_dir: PathBuf::from("out"),
            seed: 7,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.intervals < 1 || self.grid.nodes < 1 {
            return Err(CliError::Config(format!("grid counts must be at least 1, got {}", self.grid)));
        }
        if let Some(e) = self.eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(CliError::Config(format!("eps entries must be finite and non-negative, got {e}")));
        }
        if !(self.solver.kkt_tolerance > 0.0 && self.solver.kkt_tolerance.is_finite()) {
            return Err(CliError::Config("solver.kkt_tolerance must be positive".into()));
        }
        self.scheme()?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<UnitScheme, CliError> {
        self.units.parse().map_err(|e| CliError::Config(format!("units: {e}")))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            kkt_tolerance: self.solver.kkt_tolerance,
            max_iterations: self.solver.max_iterations,
            ..SolverConfig::default()
        }
    }

    /// SHA-256 over everything that affects numerical results (the output
    /// directory is excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex(&Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    /// Hash of the settings that determine the reference solve.
    pub fn reference_hash(&self) -> String {
        let key = serde_json::json!({
            "grid": self.grid,
            "solver": self.solver,
            "units": self.units,
        });
        hex(&Sha256::digest(key.to_string().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("seed = 1\ncolour = \"red\"\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        assert!(RunConfig::from_toml("[grid]\nintervals = 4\nnodes = 3\nextra = 1\n").is_err());
    }

    #[test]
    fn negative_eps_and_empty_grid_are_rejected() {
        assert!(RunConfig::from_toml("eps = [0.1, -0.01]").is_err());
        assert!(RunConfig::from_toml("[grid]\nintervals = 0\nnodes = 3\n").is_err());
        assert!(RunConfig::from_toml("units = \"furlongs\"").is_err());
    }

    #[test]
    fn grid_flag_parses() {
        assert_eq!("16x5".parse::<GridConfig>().unwrap(), GridConfig { intervals: 16, nodes: 5 });
        assert!("16".parse::<GridConfig>().is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig { output_dir: "elsewhere".into(), ..RunConfig::default() };
        let c = RunConfig { seed: 8, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
