use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ocpsens_cli::{
    cmd_check, cmd_qoi_study, cmd_sensitivity_predict, cmd_solve_reference, load_config, CliError,
    GridConfig, Overrides, RunConfig,
};

#[derive(Parser)]
#[command(name = "ocpsens", version, about = "Hypersonic surrogate-error study: reference solves, sensitivity predictions, QoI error estimates and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated ε list (overrides `eps`).
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Collocation grid as `<intervals>x<nodes>`.
    #[arg(long)]
    grid: Option<GridConfig>,
    /// Unit scheme, `si` or `kgkms`.
    #[arg(long)]
    units: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write the reference trajectory and report.
    SolveReference(Common),
    /// Compare reference, sensitivity prediction and re-solved truth for each ε.
    SensitivityPredict(Common),
    /// Tabulate the adjoint QoI error estimate, the true error and the bound for each ε.
    QoiStudy(Common),
    /// Run the derivative, quadrature and duality self-tests.
    Check {
        #[command(flatten)]
        common: Common,
        /// Test hook: perturb dynamics Jacobian entry `ROW,COL`.
        #[arg(long, hide = true, value_parser = parse_entry)]
        inject_jacobian_defect: Option<(usize, usize)>,
    },
}

fn parse_entry(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected ROW,COL")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn config(c: &Common) -> Result<RunConfig, CliError> {
    let ov = Overrides { out: c.out.clone(), eps: c.eps.clone(), grid: c.grid, units: c.units.clone() };
    load_config(c.config.as_deref(), &ov)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::SolveReference(c) => {
            let cfg = config(&c)?;
            let r = cmd_solve_reference(&cfg)?;
            println!(
                "{}: {} in {} iterations, objective {:.10e}, KKT residual {:.2e}, T = {:.6} s",
                r.problem, r.status, r.iterations, r.objective, r.kkt_residual, r.duration_t
            );
            if let Some(d) = r.downrange_km {
                println!("final downrange {d:.6} km");
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::SensitivityPredict(c) => {
            let cfg = config(&c)?;
            let preds = cmd_sensitivity_predict(&cfg)?;
            println!("eps  max|reference-truth|  max|predicted-truth|  (x1, x2 in km, delta in rad)");
            for p in &preds {
                let (r, q) = (p.reference_deviation(), p.predicted_deviation());
                println!(
                    "{}  x1 {:.3e} / {:.3e}  x2 {:.3e} / {:.3e}  delta {:.3e} / {:.3e}",
                    p.eps, r[0], q[0], r[1], q[1], r[6], q[6]
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::QoiStudy(c) => {
            let cfg = config(&c)?;
            let rows = cmd_qoi_study(&cfg)?;
            println!("{:>8} {:>16} {:>16} {:>16}", "eps", "estimate [km]", "true error [km]", "bound [km]");
            for r in &rows {
                println!("{:>8} {:>16.8} {:>16.8} {:>16.8}", r.eps, r.estimate, r.true_error, r.bound);
            }
            println!("wrote {}", cfg.output_dir.join("qoi_study.csv").display());
            Ok(true)
        }
        Command::Check { common, inject_jacobian_defect } => {
            let cfg = config(&common)?;
            let lines = cmd_check(&cfg, inject_jacobian_defect)?;
            let mut all = true;
            for l in &lines {
                all &= l.passed;
                println!("[{}] {}", if l.passed { "PASS" } else { "FAIL" }, l.name);
                for d in l.detail.lines() {
                    println!("       {d}");
                }
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
