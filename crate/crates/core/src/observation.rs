//! Gaussian local-average sensors, their Riesz representers and Gram matrices.
//!
//! Each sensor observes both components, so `m` sensors give `2m`
//! measurements: the first `m` act on `q`, the last `m` on `p`, with the same
//! Gaussian representer in both blocks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::discretization::{GridFunction, SpatialGrid};
use crate::error::{Error, Result};

/// Sensor centres `x_s` and the common Gaussian width `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    pub dim: usize,
    pub positions: Vec<[f64; 2]>,
    pub sigma: f64,
}

impl SensorArray {
    pub fn new(dim: usize, positions: Vec<[f64; 2]>, sigma: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidArgument(format!("sensor dimension {dim}")));
        }
        if positions.is_empty() {
            return Err(Error::Empty("sensor positions"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        if positions.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidArgument("non-finite sensor position".into()));
        }
        let positions = positions
            .into_iter()
            .map(|p| if dim == 1 { [p[0], 0.0] } else { p })
            .collect();
        Ok(Self {
            dim,
            positions,
            sigma,
        })
    }

    pub fn new_1d(xs: &[f64], sigma: f64) -> Result<Self> {
        Self::new(1, xs.iter().map(|&x| [x, 0.0]).collect(), sigma)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Positions mapped back into the periodic cell.
    pub fn wrapped(&self, grid: &SpatialGrid) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            for a in 0..self.dim {
                p[a] = grid.wrap(a, p[a]);
            }
        }
        out
    }

    pub fn mean_position(&self) -> [f64; 2] {
        let m = self.len() as f64;
        let mut acc = [0.0; 2];
        for p in &self.positions {
            acc[0] += p[0] / m;
            acc[1] += p[1] / m;
        }
        acc
    }
}

/// Sampled representers of all `2m` functionals.
///
/// Since the `q` and `p` representers coincide, one `N x m` matrix holds both
/// blocks; [`ObservationOperator::w_q`] and [`ObservationOperator::w_p`]
/// return it.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    pub grid: SpatialGrid,
    pub sensors: SensorArray,
    omega: DMatrix<f64>,
}

fn gaussian_norm(sigma: f64, dim: usize) -> f64 {
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.5 * dim as f64)
}

fn squared_distance(grid: &SpatialGrid, x: [f64; 2], s: [f64; 2]) -> f64 {
    (0..grid.dim())
        .map(|a| grid.min_image(a, x[a] - s[a]).powi(2))
        .sum()
}

/// Samples the Gaussian representers on the grid, using the minimum-image
/// distance. Sensors outside the periodic cell are wrapped first.
pub fn build_representers(sensors: &SensorArray, grid: &SpatialGrid) -> Result<ObservationOperator> {
    if sensors.dim != grid.dim() {
        return Err(Error::Dimension(format!(
            "{}D sensors on a {}D grid",
            sensors.dim,
            grid.dim()
        )));
    }
    let sensors = sensors.wrapped(grid);
    let h_min = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::MAX, f64::min);
    if sensors.sigma < h_min {
        log::warn!(
            "sensor width {} is below the grid spacing {}; representers are under-resolved",
            sensors.sigma,
            h_min
        );
    }
    let n = grid.len();
    let m = sensors.len();
    let c = gaussian_norm(sensors.sigma, grid.dim());
    let s2 = 2.0 * sensors.sigma * sensors.sigma;
    let mut omega = DMatrix::zeros(n, m);
    for (j, s) in sensors.positions.iter().enumerate() {
        let mut col = omega.column_mut(j);
        for i in 0..n {
            col[i] = c * (-squared_distance(grid, grid.point(i), *s) / s2).exp();
        }
    }
    Ok(ObservationOperator {
        grid: *grid,
        sensors,
        omega,
    })
}

impl ObservationOperator {
    pub fn m(&self) -> usize {
        self.omega.ncols()
    }

    pub fn w_q(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn w_p(&self) -> &DMatrix<f64> {
        &self.omega
    }

    fn weight(&self) -> f64 {
        self.grid.quadrature().weight
    }

    /// Representer `i` of the `2m` functionals as a phase-space field.
    pub fn representer(&self, i: usize) -> GridFunction {
        let m = self.m();
        let col: Vec<f64> = self.omega.column(i % m).iter().copied().collect();
        let zero = vec![0.0; self.grid.len()];
        if i < m {
            GridFunction {
                grid: self.grid,
                q: col,
                p: zero,
            }
        } else {
            GridFunction {
                grid: self.grid,
                q: zero,
                p: col,
            }
        }
    }

    /// `sum_i a_i omega_i` for a coefficient vector of length `2m`.
    pub fn synthesize(&self, a: &DVector<f64>) -> GridFunction {
        let m = self.m();
        let q = &self.omega * a.rows(0, m);
        let p = &self.omega * a.rows(m, m);
        GridFunction {
            grid: self.grid,
            q: q.iter().copied().collect(),
            p: p.iter().copied().collect(),
        }
    }

    /// The `m x m` block `A_q = A_p`.
    pub fn gram_block(&self) -> DMatrix<f64> {
        let mut a = self.omega.tr_mul(&self.omega) * self.weight();
        a = (&a + a.transpose()) * 0.5;
        a
    }

    /// `[B_q; B_p]` rows for a stacked `2N x k` basis.
    pub fn gram_b_blocks(&self, basis: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.grid.len();
        if basis.nrows() != 2 * n {
            return Err(Error::Dimension(format!(
                "basis has {} rows, grid needs {}",
                basis.nrows(),
                2 * n
            )));
        }
        let w = self.weight();
        let bq = self.omega.tr_mul(&basis.rows(0, n)) * w;
        let bp = self.omega.tr_mul(&basis.rows(n, n)) * w;
        Ok((bq, bp))
    }
}

/// `z_i = <omega_i, u>`; the first `m` entries see `q`, the last `m` see `p`.
pub fn measure(u: &GridFunction, obs: &ObservationOperator) -> Result<DVector<f64>> {
    if !u.grid.matches(&obs.grid) {
        return Err(Error::Dimension("field and sensors live on different grids".into()));
    }
    let m = obs.m();
    let w = obs.weight();
    let q = DVector::from_column_slice(&u.q);
    let p = DVector::from_column_slice(&u.p);
    let zq = obs.omega.tr_mul(&q) * w;
    let zp = obs.omega.tr_mul(&p) * w;
    let mut z = DVector::zeros(2 * m);
    z.rows_mut(0, m).copy_from(&zq);
    z.rows_mut(m, m).copy_from(&zp);
    Ok(z)
}

/// Adds `eta` drawn uniformly on the sphere `eta^T A^{-1} eta = eps^2`, i.e. the
/// representer-space element `W A^{-1} eta` has V-norm exactly `eps`.
pub fn add_noise(z: &DVector<f64>, gram_a: &DMatrix<f64>, eps_noise: f64, seed: u64) -> Result<DVector<f64>> {
    if eps_noise < 0.0 || !eps_noise.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {eps_noise}")));
    }
    if eps_noise == 0.0 {
        return Ok(z.clone());
    }
    if gram_a.nrows() != z.len() || gram_a.ncols() != z.len() {
        return Err(Error::Dimension("noise metric does not match measurements".into()));
    }
    let chol = gram_a.clone().cholesky().ok_or_else(|| Error::SingularGram {
        condition: crate::linalg::spd_condition(gram_a),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = loop {
        let g: DVector<f64> = DVector::from_fn(z.len(), |_, _| StandardNormal.sample(&mut rng));
        if g.norm() > 0.0 {
            break g;
        }
    };
    let eta = chol.l() * (&g * (eps_noise / g.norm()));
    Ok(z + eta)
}

/// Block-diagonal `A = diag(A_q, A_p)` of representer inner products.
pub fn gram_a(obs: &ObservationOperator) -> DMatrix<f64> {
    let sensors = &obs.sensors;
    for i in 0..sensors.len() {
        for j in 0..i {
            let d2 = squared_distance(&obs.grid, sensors.positions[i], sensors.positions[j]);
            if d2.sqrt() < 1e-10 {
                log::warn!("sensors {j} and {i} coincide; the Gram matrix is nearly singular");
            }
        }
    }
    let block = obs.gram_block();
    let m = obs.m();
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    a.view_mut((0, 0), (m, m)).copy_from(&block);
    a.view_mut((m, m), (m, m)).copy_from(&block);
    a
}

/// `B_{is} = <omega_i, v_s>` for a stacked `2N x k` basis, in `[B_q; B_p]` layout.
pub fn gram_b(obs: &ObservationOperator, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (bq, bp) = obs.gram_b_blocks(basis)?;
    let m = obs.m();
    let mut b = DMatrix::zeros(2 * m, basis.ncols());
    b.rows_mut(0, m).copy_from(&bq);
    b.rows_mut(m, m).copy_from(&bp);
    Ok(b)
}

/// Columns `d omega_j / d x_{s,j}` along `axis`, sampled on the grid.
pub fn representer_derivatives(obs: &ObservationOperator, axis: usize) -> DMatrix<f64> {
    let grid = &obs.grid;
    let sigma2 = obs.sensors.sigma * obs.sensors.sigma;
    let mut d = DMatrix::zeros(grid.len(), obs.m());
    for (j, s) in obs.sensors.positions.iter().enumerate() {
        for i in 0..grid.len() {
            let x = grid.point(i);
            let dx = grid.min_image(axis, x[axis] - s[axis]);
            d[(i, j)] = dx / sigma2 * obs.omega[(i, j)];
        }
    }
    d
}
