//! Pure transport `u_t + theta_2 u_x = 0` of a Gaussian packet of width
//! `theta_1`: the reduced space is spanned by exact solutions, so only the
//! sensors decide whether the state stays observable.

use nalgebra::DMatrix;

use super::{Mode, RunRecord};
use crate::discretization::{GridFunction, SpatialGrid};
use crate::error::{Error, Result};
use crate::observation::{build_representers, gram_a, gram_b, measure, SensorArray};
use crate::pbdw::{error_report, sweep_max, PbdwSolver};
use crate::placement::{sensors_update, PlacementConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub half_extent: f64,
    pub points: usize,
    /// `(theta_1, theta_2)` of the snapshots spanning the reduced space.
    pub training: Vec<[f64; 2]>,
    pub test: Vec<[f64; 2]>,
    pub sigma: f64,
    pub m: usize,
    /// Initial sensors are equispaced in this interval.
    pub sensor_interval: [f64; 2],
    pub t_final: f64,
    /// Number of assimilation intervals.
    pub intervals: usize,
    pub placement: PlacementConfig,
    pub beta_floor: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            half_extent: 40.0,
            points: 512,
            training: vec![[0.8, 1.0], [1.0, 1.0], [1.2, 1.0]],
            test: vec![[0.9, 1.0], [1.1, 1.0]],
            sigma: 0.5,
            m: 8,
            sensor_interval: [-2.5, 2.5],
            t_final: 25.0,
            intervals: 100,
            placement: PlacementConfig::default(),
            beta_floor: 0.0,
        }
    }
}

impl TransportConfig {
    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new_1d(self.half_extent, self.points)
    }

    pub fn initial_sensors(&self) -> Result<SensorArray> {
        let [a, b] = self.sensor_interval;
        let xs: Vec<f64> = if self.m == 1 {
            vec![0.5 * (a + b)]
        } else {
            (0..self.m)
                .map(|i| a + (b - a) * i as f64 / (self.m - 1) as f64)
                .collect()
        };
        SensorArray::new_1d(&xs, self.sigma)
    }

    /// Time at which every packet has travelled `10 (sigma + max theta_1)`
    /// past the initial sensor cluster.
    pub fn separation_time(&self) -> f64 {
        let w = self.training.iter().chain(&self.test).map(|t| t[0]).fold(0.0, f64::max);
        let v = self
            .training
            .iter()
            .chain(&self.test)
            .map(|t| t[1])
            .fold(f64::INFINITY, f64::min);
        (10.0 * (self.sigma + w) + self.sensor_interval[1]) / v
    }
}

/// `(1 / (sqrt(2 pi) theta_1)) exp(-(x - t theta_2)^2 / (2 theta_1^2))` in
/// `q`, with `p = 0`, evaluated at the minimum-image distance.
pub fn transport_case(grid: &SpatialGrid, theta_1: f64, theta_2: f64, t: f64) -> Result<GridFunction> {
    if !(theta_1 > 0.0) {
        return Err(Error::InvalidArgument(format!("theta_1 must be positive, got {theta_1}")));
    }
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("transport is one-dimensional".into()));
    }
    let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * theta_1);
    let q = (0..grid.len())
        .map(|i| {
            let d = grid.min_image(0, grid.coordinate(0, i) - t * theta_2);
            c * (-d * d / (2.0 * theta_1 * theta_1)).exp()
        })
        .collect();
    GridFunction::new(*grid, q, vec![0.0; grid.len()])
}

/// V-orthonormal stacked basis of the exact snapshots at time `t`.
fn snapshot_basis(grid: &SpatialGrid, thetas: &[[f64; 2]], t: f64) -> Result<DMatrix<f64>> {
    let n2 = 2 * grid.len();
    let sw = grid.quadrature().weight.sqrt();
    let mut x = DMatrix::zeros(n2, thetas.len());
    for (j, th) in thetas.iter().enumerate() {
        let u = transport_case(grid, th[0], th[1], t)?;
        x.set_column(j, &(u.to_stacked() * sw));
    }
    let qr = x.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * rmax) {
        return Err(Error::RankDeficient {
            requested: thetas.len(),
            effective: r.diagonal().iter().filter(|d| d.abs() > 1e-12 * rmax).count(),
        });
    }
    Ok(qr.q() / sw)
}

/// Stability and reconstruction of the transported packets with sensors
/// either fixed at the initial layout or moved by gradient ascent at every
/// assimilation time. The Hamiltonian columns use the conserved energy
/// `|u|^2 / 2`.
pub fn transport_beta_decay_demo(cfg: &TransportConfig, mode: Mode) -> Result<Vec<RunRecord>> {
    if cfg.training.is_empty() || cfg.test.is_empty() {
        return Err(Error::Empty("transport parameters"));
    }
    if cfg.intervals == 0 || !(cfg.t_final > 0.0) {
        return Err(Error::InvalidArgument("transport time grid".into()));
    }
    let grid = cfg.grid()?;
    let mut sensors = cfg.initial_sensors()?;
    let mut warm = None;
    let energy = |u: &GridFunction| 0.5 * crate::discretization::norm(u).powi(2);
    let mut records = Vec::with_capacity(cfg.intervals + 1);
    for j in 0..=cfg.intervals {
        let t = cfg.t_final * j as f64 / cfg.intervals as f64;
        let v = snapshot_basis(&grid, &cfg.training, t)?;
        let mut ascent = Vec::new();
        let mut ascent_iterations = 0;
        if mode == Mode::Dynamic {
            let out = sensors_update(&sensors, &grid, &v, &cfg.placement, warm)?;
            sensors = out.sensors;
            warm = out.last_alpha.or(warm);
            ascent_iterations = out.iterations;
            ascent = out.trace;
        }
        let obs = build_representers(&sensors, &grid)?;
        let solver = PbdwSolver::new(&gram_a(&obs), &gram_b(&obs, &v)?)?;
        let beta = solver.stability().beta;
        let errors = if beta > cfg.beta_floor {
            let reports = cfg
                .test
                .iter()
                .map(|th| {
                    let u = transport_case(&grid, th[0], th[1], t)?;
                    let z = measure(&u, &obs)?;
                    let rec = solver.reconstruct(&v, &obs, &z, false, cfg.beta_floor)?;
                    error_report(&u, &rec, &v, beta, energy, None)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(sweep_max(&reports)?)
        } else {
            None
        };
        records.push(RunRecord {
            step: j,
            t,
            beta,
            errors,
            sensors: sensors.clone(),
            ascent_iterations,
            ascent,
            lipschitz: f64::NAN,
            true_theta: Vec::new(),
        });
    }
    Ok(records)
}
