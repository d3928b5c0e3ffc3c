//! The hypersonic study: reference solve, tracking base solution,
//! sensitivity predictions and the QoI error table.

use std::sync::Arc;

use ocpsens::adjoint::{qoi_error_bound, qoi_error_estimate, solve_adjoint_system, AdjointSolution, ErrorBands};
use ocpsens::collocation::{CollocationGrid, CollocationSolution};
use ocpsens::hypersonic::{
    build_tracking, solve_max_downrange, solve_tracking, unit_scaling, AeroModel, Reference, TrackingWeights,
    UnitScaling, UnitScheme, VehicleParams, N_X,
};
use ocpsens::nlp::SolverConfig;
use ocpsens::ocp::Qoi;
use ocpsens::sensitivity::{assemble_lq_data, solve_sensitivity, LqData, PerturbationData, SensitivitySolution};
use ocpsens::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::CliError;

/// Dense output samples per trajectory, uniform in normalized time.
pub const SAMPLES: usize = 201;

/// Names of the trajectory columns after `t`.
pub const COMPONENTS: [&str; 7] = ["x1", "x2", "v", "gamma", "alpha", "q", "delta"];

/// Dense trajectory in reporting units (kg/km/s, radians).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    pub duration: f64,
    /// `[x1, x2, v, gamma, alpha, q, delta]` at `τ = i / (SAMPLES − 1)`.
    pub rows: Vec<[f64; 7]>,
}

impl DenseTrajectory {
    fn sample<F>(duration: f64, mut at: F) -> Result<Self, CliError>
    where
        F: FnMut(f64) -> Result<(Vec<f64>, Vec<f64>), CliError>,
    {
        let mut rows = Vec::with_capacity(SAMPLES);
        for i in 0..SAMPLES {
            let tau = i as f64 / (SAMPLES - 1) as f64;
            let (x, u) = at(tau)?;
            let xr = UnitScaling::report_x(&x);
            let mut row = [0.0; 7];
            row[..N_X].copy_from_slice(&xr);
            row[N_X] = u[0];
            rows.push(row);
        }
        Ok(Self { duration, rows })
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows.len()).map(move |i| self.duration * i as f64 / (self.rows.len() - 1) as f64)
    }

    /// Componentwise `max_i |a_i − b_i|` over samples at equal normalized time.
    pub fn deviation(&self, other: &Self) -> [f64; 7] {
        let mut out = [0.0f64; 7];
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for j in 0..7 {
                out[j] = out[j].max((a[j] - b[j]).abs());
            }
        }
        out
    }

    pub fn from_reference(reference: &Reference) -> Result<Self, CliError> {
        Self::sample(reference.duration, |tau| Ok((reference.state_at(tau)?, reference.control_at(tau)?)))
    }

    pub fn from_solution(sol: &CollocationSolution, scaling: &UnitScaling) -> Result<Self, CliError> {
        let duration = scaling.unscale_p(&sol.params())[0];
        Self::sample(duration, |tau| {
            Ok((scaling.unscale_x(&sol.state_at(tau)?), scaling.unscale_u(&sol.control_at(tau)?)))
        })
    }
}

/// Solve the max-downrange problem with the surrogate model.
pub fn solve_reference(
    grid: CollocationGrid,
    scheme: UnitScheme,
    config: &SolverConfig,
) -> Result<(CollocationSolution, UnitScaling), CliError> {
    Ok(solve_max_downrange(&VehicleParams::default(), AeroModel::Surrogate, grid, scheme, config)?)
}

/// One row of the QoI study table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiRow {
    pub eps: f64,
    pub estimate: f64,
    pub true_error: f64,
    pub bound: f64,
}

/// Reference, base tracking solution at the surrogate, its LQ data and the
/// downrange adjoint.
pub struct Study {
    pub params: VehicleParams,
    pub reference: Arc<Reference>,
    pub grid: CollocationGrid,
    pub scheme: UnitScheme,
    pub solver: SolverConfig,
    pub base: CollocationSolution,
    pub scaling: UnitScaling,
    pub lq: LqData,
    pub adjoint: AdjointSolution,
    pub qoi: Arc<dyn Qoi>,
}

impl Study {
    pub fn new(
        reference: Arc<Reference>,
        grid: CollocationGrid,
        scheme: UnitScheme,
        solver: SolverConfig,
    ) -> Result<Self, CliError> {
        let params = VehicleParams::default();
        let (base, scaling) =
            solve_tracking(&params, AeroModel::Surrogate, reference.clone(), grid.clone(), scheme, &solver)?;
        if !base.converged() {
            return Err(CliError::Solver(format!(
                "tracking solve with the surrogate did not converge ({:?}, KKT residual {:e})",
                base.nlp.status, base.nlp.kkt_residual
            )));
        }
        let lq = assemble_lq_data(&base)?;
        let qoi = lq.transcription.prob.qoi.clone().ok_or(CliError::Solver("problem has no QoI".into()))?;
        let adjoint = solve_adjoint_system(&lq, qoi.as_ref())?;
        Ok(Self { params, reference, grid, scheme, solver, base, scaling, lq, adjoint, qoi })
    }

    /// `δg = g*(ε) − ĝ` sampled along the base solution (solver units).
    pub fn perturbation(&self, eps: f64) -> Result<PerturbationData, CliError> {
        let truth = build_tracking(&self.params, AeroModel::Truth { eps }, self.reference.clone(), TrackingWeights::default())?;
        let (truth, _) = unit_scaling(&truth, self.scheme)?;
        Ok(PerturbationData::between(&self.lq, truth.g.as_ref(), self.lq.transcription.prob.g.as_ref()))
    }

    /// Tracking solve with `model`, warm-started at the reference.
    pub fn solve_with(&self, model: AeroModel, solver: &SolverConfig) -> Result<CollocationSolution, CliError> {
        let (sol, _) = solve_tracking(&self.params, model, self.reference.clone(), self.grid.clone(), self.scheme, solver)?;
        if !sol.converged() {
            return Err(CliError::Solver(format!(
                "tracking solve with {model:?} did not converge ({:?}, KKT residual {:e})",
                sol.nlp.status, sol.nlp.kkt_residual
            )));
        }
        Ok(sol)
    }

    /// Downrange (km) of a tracking solution.
    pub fn downrange(&self, sol: &CollocationSolution) -> f64 {
        let xf = sol.x_point(sol.grid().num_points() - 1);
        self.qoi.terminal(&xf, &sol.params())
    }

    pub fn estimate(&self, eps: f64) -> Result<f64, CliError> {
        Ok(qoi_error_estimate(&self.lq, &self.adjoint, &self.perturbation(eps)?, self.qoi.as_ref())?)
    }

    /// Bound with equality-case bands `|δg|`, `|δg_y|`.
    pub fn bound(&self, eps: f64) -> Result<f64, CliError> {
        let bands = ErrorBands::from_perturbation(&self.perturbation(eps)?);
        Ok(qoi_error_bound(&self.lq, &self.adjoint, &bands, self.qoi.as_ref())?)
    }

    /// Estimate, re-solve error and bound for every `ε`; the re-solves run
    /// concurrently and rows keep the order of `eps`.
    pub fn qoi_table(&self, eps: &[f64]) -> Result<Vec<QoiRow>, CliError> {
        let q0 = self.downrange(&self.base);
        eps.par_iter()
            .map(|&e| {
                let truth = self.solve_with(AeroModel::Truth { eps: e }, &self.solver)?;
                Ok(QoiRow {
                    eps: e,
                    estimate: self.estimate(e)?,
                    true_error: (self.downrange(&truth) - q0).abs(),
                    bound: self.bound(e)?,
                })
            })
            .collect()
    }

    pub fn sensitivity(&self, eps: f64) -> Result<SensitivitySolution, CliError> {
        Ok(solve_sensitivity(&self.lq, &self.perturbation(eps)?)?)
    }

    /// Base solution plus the first-order correction `δz(ε)`.
    pub fn predicted(&self, dz: &SensitivitySolution) -> Result<DenseTrajectory, CliError> {
        let grid = self.base.grid();
        let x: Vec<Vec<f64>> = (0..grid.num_points())
            .map(|p| self.base.x_point(p).iter().zip(&dz.dx[p]).map(|(a, b)| a + b).collect())
            .collect();
        let u: Vec<Vec<f64>> = (0..grid.num_nodes())
            .map(|k| self.base.u_node(k).iter().zip(&dz.du[k]).map(|(a, b)| a + b).collect())
            .collect();
        let p: Vec<f64> = self.base.params().iter().zip(&dz.dp).map(|(a, b)| a + b).collect();
        let duration = self.scaling.unscale_p(&p)[0];
        DenseTrajectory::sample(duration, |tau| {
            Ok((
                self.scaling.unscale_x(&grid.interpolate_points(&x, tau)?),
                self.scaling.unscale_u(&grid.interpolate_nodes(&u, tau)?),
            ))
        })
    }

    /// Reference, sensitivity prediction and re-solved truth at `ε`.
    pub fn prediction(&self, eps: f64) -> Result<Prediction, CliError> {
        let dz = self.sensitivity(eps)?;
        let truth = self.solve_with(AeroModel::Truth { eps }, &self.solver)?;
        Ok(Prediction {
            eps,
            reference: DenseTrajectory::from_reference(&self.reference)?,
            predicted: self.predicted(&dz)?,
            truth: DenseTrajectory::from_solution(&truth, &self.scaling)?,
        })
    }

    /// Primal variables `(x, u, p)` of a solution in solver units.
    pub fn primal(sol: &CollocationSolution) -> Vec<f64> {
        let mut v: Vec<f64> = sol.x_points().into_iter().flatten().collect();
        v.extend(sol.u_nodes().into_iter().flatten());
        v.extend(sol.params());
        v
    }

    /// Taylor remainders `‖z(ĝ + hδg) − z(ĝ) − h δz‖∞` of the primal
    /// solution for `δg = g*(ε) − ĝ`. The truth model is linear in `ε`, so
    /// `ĝ + hδg` is the truth model at `hε`.
    pub fn taylor_remainders(&self, eps: f64, steps: &[f64], solver: &SolverConfig) -> Result<Vec<f64>, CliError> {
        let dz = self.sensitivity(eps)?;
        let mut lin: Vec<f64> = dz.dx.iter().flatten().copied().collect();
        lin.extend(dz.du.iter().flatten());
        lin.extend(&dz.dp);
        let z0 = Self::primal(&self.base);
        steps
            .par_iter()
            .map(|&h| {
                let sol = self.solve_with(AeroModel::Truth { eps: h * eps }, solver)?;
                let z = Self::primal(&sol);
                Ok((0..z.len()).map(|i| (z[i] - z0[i] - h * lin[i]).abs()).fold(0.0, f64::max))
            })
            .collect()
    }

    /// Forward and adjoint QoI derivatives along `count` seeded random
    /// perturbation directions.
    pub fn duality_pairs(&self, seed: u64, count: usize) -> Result<Vec<(f64, f64)>, CliError> {
        duality_pairs(&self.lq, &self.adjoint, self.qoi.as_ref(), seed, count)
    }
}

/// Seeded random perturbation with entries uniform in `[−1, 1]`.
pub fn random_perturbation(lq: &LqData, rng: &mut ChaCha8Rng) -> PerturbationData {
    let d = lq.dims();
    let mut p = PerturbationData::zeros(lq);
    for k in 0..lq.num_nodes() {
        p.dg[k] = DVector::from_fn(d.n_g, |_, _| rng.random_range(-1.0..=1.0));
        p.dg_y[k] = DMatrix::from_fn(d.n_g, d.n_y(), |_, _| rng.random_range(-1.0..=1.0));
    }
    p
}

pub fn duality_pairs(
    lq: &LqData,
    adjoint: &AdjointSolution,
    qoi: &dyn Qoi,
    seed: u64,
    count: usize,
) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let pert = random_perturbation(lq, &mut rng);
            let dz = solve_sensitivity(lq, &pert)?;
            let fwd = ocpsens::sensitivity::forward_qoi_derivative(lq, &dz, &pert, qoi)?;
            let bwd = ocpsens::adjoint::qoi_directional_derivative(lq, adjoint, &pert, qoi)?;
            Ok((fwd, bwd))
        })
        .collect()
}

/// The three trajectories compared at one `ε`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub eps: f64,
    pub reference: DenseTrajectory,
    pub predicted: DenseTrajectory,
    pub truth: DenseTrajectory,
}

impl Prediction {
    pub fn reference_deviation(&self) -> [f64; 7] {
        self.reference.deviation(&self.truth)
    }

    pub fn predicted_deviation(&self) -> [f64; 7] {
        self.predicted.deviation(&self.truth)
    }
}
