//! The Dyn-PBDW driver: ground truth, sensor updates, reconstruction and
//! reduced-basis evolution over the assimilation times.

mod config;
mod output;
mod transport;

pub use config::{ExperimentConfig, Layout, ModelSection, Mode, NoiseSection, ReducedSection, RunSection};
pub use config::{SensorSection, TimeSection};
pub use output::{csv_header, emit_ascent_csv, emit_csv, emit_true_theta_csv, read_csv};
pub use transport::{transport_beta_decay_demo, transport_case, TransportConfig};

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::discretization::{norm, GridFunction};
use crate::error::{Error, Result};
use crate::highfidelity::{load_trajectory, save_trajectory, solve_trajectory, Trajectory};
use crate::models::Theta;
use crate::observation::{add_noise, build_representers, gram_a, gram_b, measure, SensorArray};
use crate::pbdw::{error_report, sweep_max, ErrorReport, PbdwSolver, SweepMax};
use crate::placement::{sensors_update, AscentRecord};
use crate::sdlr::{dlr_step, initialize};

/// Diagnostics at one assimilation time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Reduced time step of this assimilation time.
    pub step: usize,
    pub t: f64,
    pub beta: f64,
    /// Maxima over the test set; `None` when `beta` is below the floor.
    pub errors: Option<SweepMax>,
    pub sensors: SensorArray,
    pub ascent_iterations: usize,
    pub ascent: Vec<AscentRecord>,
    /// Largest finite-difference slope of the Hamiltonian along the segments
    /// from the truth to the reconstruction.
    pub lipschitz: f64,
    /// Reports for the configured true parameters, in order.
    pub true_theta: Vec<ErrorReport>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.errors.is_none()
    }
}

/// Test parameters followed by the configured true parameters.
pub fn truth_thetas(cfg: &ExperimentConfig) -> Result<Vec<Theta>> {
    let mut th = cfg.parameter_grid()?.theta_s;
    th.extend(cfg.run.true_thetas.iter().map(|t| Theta(*t)));
    Ok(th)
}

/// Ground-truth trajectories for [`truth_thetas`], sampled at the
/// assimilation times.
pub fn compute_truths(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let spec = cfg.spec()?;
    let time = cfg.truth_time_grid();
    let stride = cfg.truth_stride();
    truth_thetas(cfg)?
        .par_iter()
        .map(|th| solve_trajectory(&spec, *th, time, stride))
        .collect()
}

pub fn truth_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("truth_{index:03}.bin"))
}

pub fn save_truths(dir: &Path, truths: &[Trajectory]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, tr) in truths.iter().enumerate() {
        save_trajectory(tr, &truth_path(dir, i))?;
    }
    Ok(())
}

/// Loads stored truths if every file is present and consistent with `cfg`.
pub fn load_truths(dir: &Path, cfg: &ExperimentConfig) -> Result<Option<Vec<Trajectory>>> {
    let thetas = truth_thetas(cfg)?;
    let grid = cfg.grid()?;
    let mut out = Vec::with_capacity(thetas.len());
    for (i, th) in thetas.iter().enumerate() {
        let path = truth_path(dir, i);
        if !path.exists() {
            return Ok(None);
        }
        let tr = load_trajectory(&path, Some(&grid))?;
        if check_truth(cfg, &tr, *th).is_err() {
            return Ok(None);
        }
        out.push(tr);
    }
    Ok(Some(out))
}

fn check_truth(cfg: &ExperimentConfig, tr: &Trajectory, theta: Theta) -> Result<()> {
    let time = cfg.truth_time_grid();
    if tr.kind != cfg.model.kind
        || tr.theta != theta
        || tr.stride != cfg.truth_stride()
        || tr.time.n_steps != time.n_steps
        || tr.time.t_final != time.t_final
        || tr.snapshots.len() != cfg.assimilation_count()
    {
        return Err(Error::InvalidArgument(format!(
            "trajectory for {:?} does not match the configuration",
            theta.0
        )));
    }
    Ok(())
}

fn noise_seed(seed: u64, time_index: usize, theta_index: usize) -> u64 {
    seed ^ (time_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (theta_index as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Largest central-difference slope of `h` along the unit direction from `u`
/// to `v`, sampled at both ends and the midpoint of the segment.
pub fn lipschitz_estimate<H>(h: H, u: &GridFunction, v: &GridFunction) -> f64
where
    H: Fn(&GridFunction) -> f64,
{
    let d = v.sub(u);
    let len = norm(&d);
    if !(len > 0.0) {
        return 0.0;
    }
    let e = d.scaled(1.0 / len);
    let step = 1e-5 * norm(u).max(1.0);
    [0.0, 0.5, 1.0]
        .iter()
        .map(|s| {
            let x = u.add_scaled(s * len, &e);
            ((h(&x.add_scaled(step, &e)) - h(&x.add_scaled(-step, &e))) / (2.0 * step)).abs()
        })
        .fold(0.0, f64::max)
}

struct ThetaOutcome {
    report: ErrorReport,
    lipschitz: f64,
}

/// Runs the assimilation loop against precomputed truths (ordered as
/// [`truth_thetas`]).
pub fn run(cfg: &ExperimentConfig, truths: &[Trajectory]) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let thetas = truth_thetas(cfg)?;
    if truths.len() != thetas.len() {
        return Err(Error::Dimension(format!(
            "{} truths for {} parameters",
            truths.len(),
            thetas.len()
        )));
    }
    for (tr, th) in truths.iter().zip(&thetas) {
        check_truth(cfg, tr, *th)?;
    }
    let n_test = thetas.len() - cfg.run.true_thetas.len();
    let pgrid = cfg.parameter_grid()?;
    let (mut basis, mut ens) = initialize(&spec, &pgrid.theta_h, cfg.reduced.n)?;
    let mut sensors = cfg.initial_sensors()?;
    let mut warm = None;
    let mut references: Vec<Option<(f64, f64)>> = vec![None; thetas.len()];
    let dt = cfg.time_grid().dt();
    let mut records = Vec::with_capacity(cfg.assimilation_count());
    for j in 0..cfg.assimilation_count() {
        let step = j * cfg.time.stride;
        let v = basis.matrix();
        let mut ascent = Vec::new();
        let mut ascent_iterations = 0;
        if cfg.run.mode == Mode::Dynamic {
            let out = sensors_update(&sensors, &spec.grid, &v, &cfg.placement, warm)?;
            sensors = out.sensors;
            warm = out.last_alpha.or(warm);
            ascent_iterations = out.iterations;
            ascent = out.trace;
        }
        let obs = build_representers(&sensors, &spec.grid)?;
        let a = gram_a(&obs);
        let solver = PbdwSolver::new(&a, &gram_b(&obs, &v)?)?;
        let beta = solver.stability().beta;
        let t = cfg.time_grid().time(step);
        let ok = beta >= cfg.run.beta_floor;
        let outcomes: Option<Vec<ThetaOutcome>> = if ok {
            let res: Result<Vec<ThetaOutcome>> = (0..thetas.len())
                .into_par_iter()
                .map(|k| {
                    let u = &truths[k].snapshots[j];
                    let mut z = measure(u, &obs)?;
                    if cfg.noise.level > 0.0 {
                        z = add_noise(&z, &a, cfg.noise.level, noise_seed(cfg.run.seed, j, k))?;
                    }
                    let rec = solver.reconstruct(&v, &obs, &z, false, cfg.run.beta_floor)?;
                    let h = |f: &GridFunction| spec.hamiltonian(thetas[k], f);
                    let reference = references[k].map(|(_, r)| (truths[k].hamiltonians[0], r));
                    let report = error_report(u, &rec, &v, beta, h, reference)?;
                    let lipschitz = lipschitz_estimate(h, u, &rec.v_star);
                    Ok(ThetaOutcome { report, lipschitz })
                })
                .collect();
            Some(res?)
        } else {
            log::warn!("beta = {beta:.3e} below the floor at t = {t}");
            None
        };
        let (errors, lipschitz, true_theta) = match outcomes {
            Some(out) => {
                for (k, o) in out.iter().enumerate() {
                    if references[k].is_none() {
                        references[k] = Some((truths[k].hamiltonians[0], o.report.ham_rec));
                    }
                }
                let reports: Vec<ErrorReport> = out.iter().map(|o| o.report).collect();
                let lip = out[..n_test].iter().map(|o| o.lipschitz).fold(0.0, f64::max);
                (Some(sweep_max(&reports[..n_test])?), lip, reports[n_test..].to_vec())
            }
            None => (None, f64::NAN, Vec::new()),
        };
        records.push(RunRecord {
            step,
            t,
            beta,
            errors,
            sensors: sensors.clone(),
            ascent_iterations,
            ascent,
            lipschitz,
            true_theta,
        });
        if j + 1 < cfg.assimilation_count() {
            for _ in 0..cfg.time.stride {
                let (b, e) = dlr_step(&spec, &basis, &ens, dt)?;
                basis = b;
                ens = e;
            }
        }
    }
    Ok(records)
}

/// Loads or computes the truths, then runs.
pub fn run_experiment(cfg: &ExperimentConfig, truth_dir: Option<&Path>) -> Result<Vec<RunRecord>> {
    let truths = match truth_dir.map(|d| load_truths(d, cfg)).transpose()?.flatten() {
        Some(t) => t,
        None => compute_truths(cfg)?,
    };
    run(cfg, &truths)
}
