//! Parameterized canonical Hamiltonian PDEs on periodic grids.
//!
//! Every model is written as `u' = P_theta(u) = J dH_theta(u)` with
//! `J(q, p) = (p, -q)`. The discrete vector fields are the exact
//! `J`-gradients of the discrete Hamiltonians below: the NLS gradient energy
//! uses forward differences (whose square sums to `-q . Lap q`), the shallow
//! water flux uses the centered gradient in both the field and the energy.

use serde::{Deserialize, Serialize};

use crate::discretization::{derivative, divergence, forward_difference, gradient, laplacian};
use crate::discretization::{GridFunction, SpatialGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Cubic Schrödinger equation, `theta = (alpha, epsilon)`.
    Nls1d,
    /// 1D shallow water, `theta = (alpha, beta_ic)`.
    Swe1d,
    /// 2D shallow water, `theta = (alpha, beta_ic)`.
    Swe2d,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Nls1d | ModelKind::Swe1d => 1,
            ModelKind::Swe2d => 2,
        }
    }

    pub fn default_box(self) -> [[f64; 2]; 2] {
        match self {
            ModelKind::Nls1d => [[0.98, 1.1], [0.98, 1.1]],
            ModelKind::Swe1d => [[0.1, 1.0 / 7.0], [0.2, 1.5]],
            ModelKind::Swe2d => [[0.2, 0.5], [1.1, 1.7]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nls1d => "nls1d",
            ModelKind::Swe1d => "swe1d",
            ModelKind::Swe2d => "swe2d",
        }
    }
}

/// A parameter point `theta = (theta_1, theta_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta(pub [f64; 2]);

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub parameter_box: [[f64; 2]; 2],
    pub grid: SpatialGrid,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, grid: SpatialGrid) -> Result<Self> {
        if grid.dim() != kind.dim() {
            return Err(Error::Dimension(format!(
                "{} needs a {}D grid, got {}D",
                kind.name(),
                kind.dim(),
                grid.dim()
            )));
        }
        Ok(Self {
            kind,
            parameter_box: kind.default_box(),
            grid,
        })
    }

    pub fn with_box(mut self, parameter_box: [[f64; 2]; 2]) -> Self {
        self.parameter_box = parameter_box;
        self
    }

    pub fn contains(&self, theta: Theta) -> bool {
        let tol = 1e-12;
        (0..2).all(|a| {
            let [lo, hi] = self.parameter_box[a];
            theta.0[a] >= lo - tol * lo.abs().max(1.0) && theta.0[a] <= hi + tol * hi.abs().max(1.0)
        })
    }

    pub fn initial_condition(&self, theta: Theta) -> Result<GridFunction> {
        if !self.contains(theta) {
            return Err(Error::OutOfBox(theta.0[0], theta.0[1]));
        }
        let n = self.grid.len();
        let [a, b] = theta.0;
        let mut q = vec![0.0; n];
        let mut p = vec![0.0; n];
        for i in 0..n {
            let [x, y] = self.grid.point(i);
            match self.kind {
                ModelKind::Nls1d => {
                    let amp = std::f64::consts::SQRT_2 / (a * x).cosh();
                    q[i] = amp * (0.5 * x).cos();
                    p[i] = amp * (0.5 * x).sin();
                }
                ModelKind::Swe1d => {
                    q[i] = 1.0 + a * (-b * x * x).exp();
                }
                ModelKind::Swe2d => {
                    q[i] = 1.0 + a * (-b * (x * x + y * y)).exp();
                }
            }
        }
        GridFunction::new(self.grid, q, p)
    }

    /// `P_theta(u)`.
    pub fn vector_field(&self, theta: Theta, u: &GridFunction) -> GridFunction {
        let grid = &self.grid;
        match self.kind {
            ModelKind::Nls1d => {
                let eps = theta.0[1];
                let lq = laplacian(grid, &u.q);
                let lp = laplacian(grid, &u.p);
                let n = u.len();
                let mut dq = vec![0.0; n];
                let mut dp = vec![0.0; n];
                for i in 0..n {
                    let r = u.q[i] * u.q[i] + u.p[i] * u.p[i];
                    dq[i] = -lp[i] - eps * r * u.p[i];
                    dp[i] = lq[i] + eps * r * u.q[i];
                }
                GridFunction {
                    grid: *grid,
                    q: dq,
                    p: dp,
                }
            }
            ModelKind::Swe1d | ModelKind::Swe2d => {
                let g = gradient(grid, &u.p);
                let flux: Vec<Vec<f64>> = g
                    .iter()
                    .map(|gc| gc.iter().zip(&u.q).map(|(a, h)| a * h).collect())
                    .collect();
                let dh: Vec<f64> = divergence(grid, &flux).iter().map(|v| -v).collect();
                let dphi: Vec<f64> = (0..u.len())
                    .map(|i| {
                        let g2: f64 = g.iter().map(|gc| gc[i] * gc[i]).sum();
                        -0.5 * g2 - u.q[i]
                    })
                    .collect();
                GridFunction {
                    grid: *grid,
                    q: dh,
                    p: dphi,
                }
            }
        }
    }

    /// Directional derivative `DP_theta(u)[v]`, assembled analytically.
    pub fn jacobian_apply(&self, theta: Theta, u: &GridFunction, v: &GridFunction) -> GridFunction {
        let grid = &self.grid;
        match self.kind {
            ModelKind::Nls1d => {
                let eps = theta.0[1];
                let lq = laplacian(grid, &v.q);
                let lp = laplacian(grid, &v.p);
                let n = u.len();
                let mut dq = vec![0.0; n];
                let mut dp = vec![0.0; n];
                for i in 0..n {
                    let (q, p) = (u.q[i], u.p[i]);
                    let r = q * q + p * p;
                    dq[i] = -lp[i] - eps * (2.0 * p * q * v.q[i] + (r + 2.0 * p * p) * v.p[i]);
                    dp[i] = lq[i] + eps * ((r + 2.0 * q * q) * v.q[i] + 2.0 * p * q * v.p[i]);
                }
                GridFunction {
                    grid: *grid,
                    q: dq,
                    p: dp,
                }
            }
            ModelKind::Swe1d | ModelKind::Swe2d => {
                let g = gradient(grid, &u.p);
                let gv = gradient(grid, &v.p);
                let flux: Vec<Vec<f64>> = (0..grid.dim())
                    .map(|a| {
                        (0..u.len())
                            .map(|i| v.q[i] * g[a][i] + u.q[i] * gv[a][i])
                            .collect()
                    })
                    .collect();
                let dh: Vec<f64> = divergence(grid, &flux).iter().map(|x| -x).collect();
                let dphi: Vec<f64> = (0..u.len())
                    .map(|i| {
                        let gg: f64 = (0..grid.dim()).map(|a| g[a][i] * gv[a][i]).sum();
                        -gg - v.q[i]
                    })
                    .collect();
                GridFunction {
                    grid: *grid,
                    q: dh,
                    p: dphi,
                }
            }
        }
    }

    /// Discrete Hamiltonian `H_theta(u)` by rectangle-rule quadrature.
    pub fn hamiltonian(&self, theta: Theta, u: &GridFunction) -> f64 {
        let grid = &self.grid;
        let quad = grid.quadrature();
        match self.kind {
            ModelKind::Nls1d => {
                let eps = theta.0[1];
                let dq = forward_difference(grid, &u.q, 0);
                let dp = forward_difference(grid, &u.p, 0);
                let density: Vec<f64> = (0..u.len())
                    .map(|i| {
                        let r = u.q[i] * u.q[i] + u.p[i] * u.p[i];
                        dq[i] * dq[i] + dp[i] * dp[i] - 0.5 * eps * r * r
                    })
                    .collect();
                0.5 * quad.integrate(&density)
            }
            ModelKind::Swe1d | ModelKind::Swe2d => {
                let g: Vec<Vec<f64>> = (0..grid.dim())
                    .map(|a| derivative(grid, &u.p, a))
                    .collect();
                let density: Vec<f64> = (0..u.len())
                    .map(|i| {
                        let g2: f64 = g.iter().map(|gc| gc[i] * gc[i]).sum();
                        u.q[i] * (g2 + u.q[i])
                    })
                    .collect();
                0.5 * quad.integrate(&density)
            }
        }
    }
}

/// `J(q, p) = (p, -q)`.
pub fn symplectic_apply(u: &GridFunction) -> GridFunction {
    GridFunction {
        grid: u.grid,
        q: u.p.clone(),
        p: u.q.iter().map(|v| -v).collect(),
    }
}

/// `J^{-1}(q, p) = (-p, q)`.
pub fn symplectic_apply_inverse(u: &GridFunction) -> GridFunction {
    GridFunction {
        grid: u.grid,
        q: u.p.iter().map(|v| -v).collect(),
        p: u.q.clone(),
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Training set `theta_h` (uniform tensor grid including the box corners) and
/// test set `theta_s` (midpoints between consecutive training lines).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    pub theta_h: Vec<Theta>,
    pub theta_s: Vec<Theta>,
}

impl ParameterGrid {
    /// `per_axis` training points per axis; yields `per_axis^2` training and
    /// `(per_axis - 1)^2` test parameters.
    pub fn uniform(parameter_box: [[f64; 2]; 2], per_axis: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::InvalidArgument(
                "need at least 2 training points per axis".into(),
            ));
        }
        let train: Vec<Vec<f64>> = parameter_box
            .iter()
            .map(|[lo, hi]| linspace(*lo, *hi, per_axis))
            .collect();
        let test: Vec<Vec<f64>> = train
            .iter()
            .map(|t| t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
            .collect();
        let tensor = |axes: &[Vec<f64>]| {
            axes[0]
                .iter()
                .flat_map(|&a| axes[1].iter().map(move |&b| Theta([a, b])))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            theta_h: tensor(&train),
            theta_s: tensor(&test),
        })
    }
}
