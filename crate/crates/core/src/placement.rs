//! Sensor placement by gradient ascent on `beta^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretization::SpatialGrid;
use crate::error::{Error, Result};
use crate::linalg::spd_condition;
use crate::observation::{build_representers, gram_a, gram_b, representer_derivatives};
use crate::observation::{ObservationOperator, SensorArray};
use crate::pbdw::{stability_constant, StabilityResult};

/// Eigengap below which `beta^2` is treated as a possibly non-smooth point.
pub const EIGENGAP_WARNING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Ascent iterations per call.
    pub l_max: usize,
    /// First trial step, in units of `sigma / |grad|_inf`.
    pub alpha0: f64,
    pub armijo_shrink: f64,
    pub armijo_slope: f64,
    pub max_backtracks: usize,
    /// Largest sensor displacement per iteration, in units of `sigma`.
    pub max_step_sigma: f64,
    /// Trials whose sensor Gram block is worse conditioned than this (and
    /// than the current layout) are rejected.
    pub max_gram_condition: f64,
    /// Only the first-order ascent (`lambda = 0`) is implemented.
    pub lambda_penalty: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            l_max: 5,
            alpha0: 0.1,
            armijo_shrink: 0.5,
            armijo_slope: 1e-4,
            max_backtracks: 20,
            max_step_sigma: 1.0,
            max_gram_condition: 1e6,
            lambda_penalty: 0.0,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) {
            return Err(Error::Config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::Config(format!(
                "armijo_shrink must lie in (0, 1), got {}",
                self.armijo_shrink
            )));
        }
        if !(self.armijo_slope >= 0.0 && self.armijo_slope < 1.0) {
            return Err(Error::Config(format!("armijo_slope {}", self.armijo_slope)));
        }
        if !(self.max_step_sigma > 0.0) {
            return Err(Error::Config(format!("max_step_sigma {}", self.max_step_sigma)));
        }
        if !(self.max_gram_condition > 1.0) {
            return Err(Error::Config(format!("max_gram_condition {}", self.max_gram_condition)));
        }
        if self.lambda_penalty != 0.0 {
            return Err(Error::Config("only lambda_penalty = 0 is supported".into()));
        }
        Ok(())
    }
}

/// Representers and stability constant for a sensor layout.
pub fn evaluate(
    sensors: &SensorArray,
    grid: &SpatialGrid,
    basis: &DMatrix<f64>,
) -> Result<(ObservationOperator, StabilityResult)> {
    let obs = build_representers(sensors, grid)?;
    let st = stability_constant(&gram_a(&obs), &gram_b(&obs, basis)?)?;
    Ok((obs, st))
}

/// `d beta^2 / d x_s` as an `m x d` matrix, using the block structure of the
/// Gram matrices:
/// `2 y_q .* (B_{q,D} c - A_D y_q) + 2 y_p .* (B_{p,D} c - A_D y_p)` with
/// `y = A^{-1} B c` per block.
pub fn grad_beta_sq(
    obs: &ObservationOperator,
    basis: &DMatrix<f64>,
    stab: &StabilityResult,
) -> Result<DMatrix<f64>> {
    if stab.eigengap < EIGENGAP_WARNING {
        log::debug!(
            "eigengap {:.3e} at the smallest eigenvalue; beta^2 may not be differentiable here",
            stab.eigengap
        );
    }
    let n = obs.grid.len();
    let m = obs.m();
    let dim = obs.grid.dim();
    let w = obs.grid.quadrature().weight;
    let block = obs.gram_block();
    let chol = block.clone().cholesky().ok_or_else(|| Error::SingularGram {
        condition: crate::linalg::spd_condition(&block),
    })?;
    let (bq, bp) = obs.gram_b_blocks(basis)?;
    let c = &stab.eigvec_c;
    let yq = chol.solve(&(&bq * c));
    let yp = chol.solve(&(&bp * c));
    let vq = basis.rows(0, n);
    let vp = basis.rows(n, n);
    let vqc = vq * c;
    let vpc = vp * c;
    let mut grad = DMatrix::zeros(m, dim);
    for axis in 0..dim {
        let d = representer_derivatives(obs, axis);
        let ad = d.tr_mul(obs.w_q()) * w;
        let bqd_c = d.tr_mul(&vqc) * w;
        let bpd_c = d.tr_mul(&vpc) * w;
        let tq = &bqd_c - &ad * &yq;
        let tp = &bpd_c - &ad * &yp;
        for j in 0..m {
            grad[(j, axis)] = 2.0 * (yq[j] * tq[j] + yp[j] * tp[j]);
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentRecord {
    pub iteration: usize,
    pub beta_sq: f64,
    pub alpha: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub sensors: SensorArray,
    pub beta_sq_initial: f64,
    pub beta_sq: f64,
    /// Accepted ascent steps.
    pub iterations: usize,
    pub trace: Vec<AscentRecord>,
    /// Last accepted step size, for warm starts.
    pub last_alpha: Option<f64>,
    pub nonsmooth_points: usize,
}

fn displaced(sensors: &SensorArray, grid: &SpatialGrid, g: &DMatrix<f64>, alpha: f64) -> SensorArray {
    let mut out = sensors.clone();
    for (j, p) in out.positions.iter_mut().enumerate() {
        for a in 0..sensors.dim {
            p[a] = grid.wrap(a, p[a] + alpha * g[(j, a)]);
        }
    }
    out
}

/// Up to `l_max` Armijo-backtracked gradient-ascent steps on `beta^2`.
///
/// The first trial step is `alpha0 * sigma / |grad|_inf`; later iterations,
/// and later calls when `warm_alpha` is given, start from the last accepted
/// step enlarged once by `1 / armijo_shrink`, but never below the first. Every trial is capped so that no
/// sensor moves more than `max_step_sigma * sigma`, and trials that push the
/// condition number of the Gram block past `max_gram_condition` are rejected.
pub fn sensors_update(
    sensors: &SensorArray,
    grid: &SpatialGrid,
    basis: &DMatrix<f64>,
    cfg: &PlacementConfig,
    warm_alpha: Option<f64>,
) -> Result<UpdateOutcome> {
    cfg.validate()?;
    let (mut obs, mut st) = evaluate(sensors, grid, basis)?;
    let beta_sq_initial = st.beta_sq;
    let mut current = sensors.clone();
    let mut current_cond = spd_condition(&obs.gram_block());
    let mut trace = Vec::new();
    let mut alpha_prev = warm_alpha;
    let mut iterations = 0;
    let mut nonsmooth_points = 0;
    let sigma = sensors.sigma;
    for l in 0..cfg.l_max {
        if st.eigengap < EIGENGAP_WARNING {
            nonsmooth_points += 1;
        }
        let g = grad_beta_sq(&obs, basis, &st)?;
        let g_inf = g.amax();
        let g2 = g.norm_squared();
        if !(g_inf > 0.0) || !g_inf.is_finite() {
            break;
        }
        let cap = cfg.max_step_sigma * sigma / g_inf;
        let cold = cfg.alpha0 * sigma / g_inf;
        let mut alpha = alpha_prev.map_or(cold, |a| (a / cfg.armijo_shrink).max(cold)).min(cap);
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial = displaced(&current, grid, &g, alpha);
            if let Ok((o, s)) = evaluate(&trial, grid, basis) {
                let cond = spd_condition(&o.gram_block());
                let conditioned = cond <= cfg.max_gram_condition || cond <= current_cond;
                if conditioned && s.beta_sq >= st.beta_sq + cfg.armijo_slope * alpha * g2 {
                    accepted = Some((trial, o, s));
                    break;
                }
            }
            alpha *= cfg.armijo_shrink;
        }
        let Some((trial, o, s)) = accepted else {
            log::debug!("line search failed at ascent iteration {l}");
            break;
        };
        current = trial;
        current_cond = spd_condition(&o.gram_block());
        obs = o;
        st = s;
        alpha_prev = Some(alpha);
        iterations += 1;
        trace.push(AscentRecord {
            iteration: l,
            beta_sq: st.beta_sq,
            alpha,
            grad_norm: g2.sqrt(),
        });
    }
    if nonsmooth_points > 0 {
        log::warn!("{nonsmooth_points} ascent iterations at a repeated smallest eigenvalue of M");
    }
    Ok(UpdateOutcome {
        sensors: current,
        beta_sq_initial,
        beta_sq: st.beta_sq,
        iterations,
        trace,
        last_alpha: alpha_prev,
        nonsmooth_points,
    })
}

/// Gradient of `beta^2` written with the full `2m x 2m` matrix `A` and the
/// stacked `2m x 2n` matrix `B`, summing the entries of each sensor's `q`
/// and `p` functionals.
pub fn grad_beta_sq_generic(
    obs: &ObservationOperator,
    basis: &DMatrix<f64>,
    stab: &StabilityResult,
) -> Result<DMatrix<f64>> {
    let n = obs.grid.len();
    let m = obs.m();
    let w = obs.grid.quadrature().weight;
    let a = gram_a(obs);
    let b = gram_b(obs, basis)?;
    let chol = a.clone().cholesky().ok_or_else(|| Error::SingularGram {
        condition: crate::linalg::spd_condition(&a),
    })?;
    let c = &stab.eigvec_c;
    let y = chol.solve(&(&b * c));
    let mut grad = DMatrix::zeros(m, obs.grid.dim());
    for axis in 0..obs.grid.dim() {
        let d = representer_derivatives(obs, axis);
        // stacked derivative and representer columns, 2N x 2m
        let mut ds = DMatrix::zeros(2 * n, 2 * m);
        let mut ws = DMatrix::zeros(2 * n, 2 * m);
        ds.view_mut((0, 0), (n, m)).copy_from(&d);
        ds.view_mut((n, m), (n, m)).copy_from(&d);
        ws.view_mut((0, 0), (n, m)).copy_from(obs.w_q());
        ws.view_mut((n, m), (n, m)).copy_from(obs.w_p());
        let ad = ds.tr_mul(&ws) * w;
        let bd = ds.tr_mul(basis) * w;
        let t: DVector<f64> = &bd * c - &ad * &y;
        for j in 0..m {
            grad[(j, axis)] = 2.0 * (y[j] * t[j] + y[j + m] * t[j + m]);
        }
    }
    Ok(grad)
}
