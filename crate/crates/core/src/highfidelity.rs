//! Ground-truth trajectories by the implicit midpoint rule.
//!
//! Each step solves `u+ = u + dt P((u + u+)/2)` by Newton's method. The Newton
//! systems `(I - dt/2 DP) d = -F` are solved by GMRES on analytic Jacobian
//! products; the stopping test is on the V-norm of the nonlinear defect.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::discretization::{norm, read_f64, read_u64, GridFunction, SpatialGrid};
use crate::error::{Error, Result};
use crate::linalg::gmres;
use crate::models::{ModelKind, ModelSpec, Theta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid T = {t_final}, N_t = {n_steps}"
            )));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t_final * step as f64 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

/// One implicit midpoint step. Negative `dt` integrates backwards.
pub fn midpoint_step(
    spec: &ModelSpec,
    theta: Theta,
    u: &GridFunction,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<(GridFunction, NewtonStats)> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step {dt}")));
    }
    let grid = u.grid;
    let sqrt_w = grid.quadrature().weight.sqrt();
    let defect = |next: &GridFunction| {
        let mid = u.add_scaled(1.0, next).scaled(0.5);
        next.sub(u).add_scaled(-dt, &spec.vector_field(theta, &mid))
    };
    let mut next = u.clone();
    let mut f = defect(&next);
    let mut res = norm(&f);
    let mut it = 0;
    while res > opts.tol {
        if it == opts.max_iter {
            return Err(Error::NewtonFailure {
                step: 0,
                iterations: it,
                residual: res,
            });
        }
        let mid = u.add_scaled(1.0, &next).scaled(0.5);
        let apply = |x: &DVector<f64>| {
            let v = GridFunction::from_stacked(grid, x.as_slice()).expect("stacked length");
            let jv = spec.jacobian_apply(theta, &mid, &v);
            v.add_scaled(-0.5 * dt, &jv).to_stacked()
        };
        let rhs = -f.to_stacked();
        let mut delta = DVector::zeros(rhs.len());
        // V-norm = sqrt(w) * Euclidean norm
        let lin_tol = (1e-6 * res).min(1e-2 * opts.tol) / sqrt_w;
        gmres(apply, &rhs, &mut delta, lin_tol, 60, 600);
        next = next.add_scaled(1.0, &GridFunction::from_stacked(grid, delta.as_slice())?);
        f = defect(&next);
        res = norm(&f);
        it += 1;
    }
    Ok((
        next,
        NewtonStats {
            iterations: it,
            residual: res,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: ModelKind,
    pub theta: Theta,
    pub time: TimeGrid,
    pub stride: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub hamiltonians: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> SpatialGrid {
        self.snapshots[0].grid
    }

    /// Snapshot stored at HF step `step` (a multiple of the stride).
    pub fn at_step(&self, step: usize) -> Option<&GridFunction> {
        if step % self.stride != 0 {
            return None;
        }
        self.snapshots.get(step / self.stride)
    }

    pub fn max_relative_drift(&self) -> f64 {
        let h0 = self.hamiltonians[0];
        let scale = if h0 != 0.0 { h0.abs() } else { 1.0 };
        self.hamiltonians
            .iter()
            .map(|h| (h - h0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

pub fn snapshot_count(n_steps: usize, stride: usize) -> usize {
    n_steps / stride + 1
}

/// Integrates from the model's initial condition, storing every `stride`-th state.
pub fn solve_trajectory(spec: &ModelSpec, theta: Theta, time: TimeGrid, stride: usize) -> Result<Trajectory> {
    let u0 = spec.initial_condition(theta)?;
    solve_from(spec, theta, u0, time, stride, &NewtonOptions::default())
}

pub fn solve_from(
    spec: &ModelSpec,
    theta: Theta,
    u0: GridFunction,
    time: TimeGrid,
    stride: usize,
    opts: &NewtonOptions,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::InvalidArgument("snapshot stride must be positive".into()));
    }
    let dt = time.dt();
    let count = snapshot_count(time.n_steps, stride);
    let mut times = Vec::with_capacity(count);
    let mut snapshots = Vec::with_capacity(count);
    let mut hamiltonians = Vec::with_capacity(count);
    times.push(0.0);
    hamiltonians.push(spec.hamiltonian(theta, &u0));
    snapshots.push(u0.clone());
    let mut u = u0;
    for step in 1..=time.n_steps {
        let (next, _) = midpoint_step(spec, theta, &u, dt, opts).map_err(|e| match e {
            Error::NewtonFailure {
                iterations,
                residual,
                ..
            } => Error::NewtonFailure {
                step,
                iterations,
                residual,
            },
            other => other,
        })?;
        u = next;
        if step % stride == 0 {
            times.push(time.time(step));
            hamiltonians.push(spec.hamiltonian(theta, &u));
            snapshots.push(u.clone());
        }
    }
    Ok(Trajectory {
        kind: spec.kind,
        theta,
        time,
        stride,
        times,
        snapshots,
        hamiltonians,
    })
}

fn kind_code(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Nls1d => 0,
        ModelKind::Swe1d => 1,
        ModelKind::Swe2d => 2,
    }
}

fn kind_from_code(code: u64) -> Option<ModelKind> {
    match code {
        0 => Some(ModelKind::Nls1d),
        1 => Some(ModelKind::Swe1d),
        2 => Some(ModelKind::Swe2d),
        _ => None,
    }
}

/// Bytes written by [`save_trajectory`]: grid header, snapshot count, the
/// snapshots, then a trailer with times, Hamiltonians, `theta`, `T`, `N_t`,
/// stride and model code.
pub fn trajectory_file_len(grid: &SpatialGrid, count: usize) -> usize {
    grid.header_len() + 8 + 16 * grid.len() * count + 16 * count + 8 * 3 + 8 * 3
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let grid = traj.grid();
    let mut w = BufWriter::new(File::create(path)?);
    grid.write_header(&mut w)?;
    w.write_all(&(traj.snapshots.len() as u64).to_le_bytes())?;
    for s in &traj.snapshots {
        s.write_payload(&mut w)?;
    }
    for v in traj.times.iter().chain(&traj.hamiltonians) {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [traj.theta.0[0], traj.theta.0[1], traj.time.t_final] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [traj.time.n_steps as u64, traj.stride as u64, kind_code(traj.kind)] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a trajectory; with `expected`, the stored grid must match it and the
/// returned snapshots use `expected` verbatim.
pub fn load_trajectory(path: &Path, expected: Option<&SpatialGrid>) -> Result<Trajectory> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut grid = GridFunction::read_grid_header(&mut r).map_err(fmt)?;
    if let Some(exp) = expected {
        if !grid.matches(exp) {
            return Err(fmt(format!(
                "stored grid {:?} / {:?} does not match the configured grid {:?} / {:?}",
                grid.counts(),
                grid.half_extents(),
                exp.counts(),
                exp.half_extents()
            )));
        }
        grid = *exp;
    }
    let trunc = |e: std::io::Error| Error::Format {
        path: path.to_path_buf(),
        reason: format!("truncated file: {e}"),
    };
    let count = read_u64(&mut r).map_err(trunc)? as usize;
    let total = std::fs::metadata(path)?.len() as usize;
    if count == 0 || trajectory_file_len(&grid, count) != total {
        return Err(fmt(format!(
            "{count} snapshots do not fit a file of {total} bytes"
        )));
    }
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        snapshots.push(GridFunction::read_payload(grid, &mut r).map_err(trunc)?);
    }
    let mut read_vec = |k: usize| -> Result<Vec<f64>> {
        (0..k).map(|_| read_f64(&mut r).map_err(trunc)).collect()
    };
    let times = read_vec(count)?;
    let hamiltonians = read_vec(count)?;
    let tail = read_vec(3)?;
    let n_steps = read_u64(&mut r).map_err(trunc)? as usize;
    let stride = read_u64(&mut r).map_err(trunc)? as usize;
    let kind = kind_from_code(read_u64(&mut r).map_err(trunc)?)
        .ok_or_else(|| fmt("unknown model code".into()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(fmt("trailing bytes".into()));
    }
    let time = TimeGrid::new(tail[2], n_steps).map_err(|e| fmt(e.to_string()))?;
    if stride == 0 || snapshot_count(n_steps, stride) != count {
        return Err(fmt("inconsistent stride".into()));
    }
    Ok(Trajectory {
        kind,
        theta: Theta([tail[0], tail[1]]),
        time,
        stride,
        times,
        snapshots,
        hamiltonians,
    })
}

/// Companion CSV with columns `t,H`.
pub fn write_hamiltonian_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,H")?;
    for (t, h) in traj.times.iter().zip(&traj.hamiltonians) {
        writeln!(w, "{t:.16e},{h:.16e}")?;
    }
    w.flush()?;
    Ok(())
}
