//! PBDW reconstruction, the stability constant and error diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::discretization::{norm, GridFunction, SpatialGrid};
use crate::error::{Error, Result};
use crate::linalg::{canonical_j, spd_condition};
use crate::observation::ObservationOperator;

pub const DEFAULT_BETA_FLOOR: f64 = 1e-12;

/// Smallest eigenpair of `M = B^T A^{-1} B`.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub beta_sq: f64,
    pub beta: f64,
    pub eigvec_c: DVector<f64>,
    pub matrix_m: DMatrix<f64>,
    /// Gap between the smallest eigenvalue and the next one, skipping the
    /// partner of a pair when `M` commutes with `J_2n`.
    pub eigengap: f64,
}

/// Factorized PBDW system for one observation space and one prior space.
///
/// `A` is applied through its Cholesky factor `L`; the least-squares problem
/// `min |L^{-1}(z - B c)|` is solved by QR of `L^{-1} B`.
#[derive(Debug, Clone)]
pub struct PbdwSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    stability: StabilityResult,
}

impl PbdwSolver {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        let (rows, k) = b.shape();
        if a.nrows() != a.ncols() || a.nrows() != rows {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                rows,
                k
            )));
        }
        if k == 0 {
            return Err(Error::Empty("prior space"));
        }
        if k > rows {
            return Err(Error::Dimension(format!(
                "prior dimension {k} exceeds the number of measurements {rows}"
            )));
        }
        let chol = a.clone().cholesky().ok_or_else(|| Error::SingularGram {
            condition: spd_condition(a),
        })?;
        let mut y = b.clone();
        chol.l_dirty().solve_lower_triangular_mut(&mut y);
        let mut mm = y.tr_mul(&y);
        mm = (&mm + mm.transpose()) * 0.5;
        let eig = mm.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let lo = eig.eigenvalues[order[0]];
        // When M commutes with J_2n every eigenvalue is double and beta^2
        // stays smooth within the pair, so the relevant gap is to the next pair.
        let paired = k % 2 == 0 && {
            let j = canonical_j(k / 2);
            (&mm * &j - &j * &mm).amax() <= 1e-10 * mm.amax()
        };
        let next = if paired { 2 } else { 1 };
        let eigengap = if k > next {
            eig.eigenvalues[order[next]] - lo
        } else {
            f64::INFINITY
        };
        let mut c: DVector<f64> = eig.eigenvectors.column(order[0]).into_owned();
        c /= c.norm();
        // fix the sign for reproducibility
        let imax = c.iamax();
        if c[imax] < 0.0 {
            c = -c;
        }
        let beta_sq = lo.max(0.0);
        let qr = y.qr();
        Ok(Self {
            chol,
            b: b.clone(),
            q: qr.q(),
            r: qr.r(),
            stability: StabilityResult {
                beta_sq,
                beta: beta_sq.sqrt(),
                eigvec_c: c,
                matrix_m: mm,
                eigengap,
            },
        })
    }

    pub fn stability(&self) -> &StabilityResult {
        &self.stability
    }

    /// Solves `M c_v = B^T A^{-1} z`.
    pub fn coefficients(&self, z: &DVector<f64>, floor: f64) -> Result<DVector<f64>> {
        if z.len() != self.b.nrows() {
            return Err(Error::Dimension(format!(
                "{} measurements for a {}-row system",
                z.len(),
                self.b.nrows()
            )));
        }
        if self.stability.beta <= floor {
            return Err(Error::IllPosed {
                beta: self.stability.beta,
                floor,
            });
        }
        let mut lz = z.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut lz);
        let rhs = self.q.tr_mul(&lz);
        self.r
            .solve_upper_triangular(&rhs)
            .ok_or(Error::IllPosed {
                beta: self.stability.beta,
                floor,
            })
    }

    /// `A^{-1} x`.
    pub fn solve_a(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    /// PBDW reconstruction from measurements `z`. `u*` is formed only when
    /// `include_w_correction` is set.
    pub fn reconstruct(
        &self,
        basis: &DMatrix<f64>,
        obs: &ObservationOperator,
        z: &DVector<f64>,
        include_w_correction: bool,
        floor: f64,
    ) -> Result<Reconstruction> {
        if basis.ncols() != self.b.ncols() {
            return Err(Error::Dimension("basis does not match B".into()));
        }
        let c = self.coefficients(z, floor)?;
        let v_star = GridFunction::from_stacked(obs.grid, (basis * &c).as_slice())?;
        let u_star = if include_w_correction {
            let resid = z - &self.b * &c;
            let eta = self.solve_a(&resid);
            Some(v_star.add_scaled(1.0, &obs.synthesize(&eta)))
        } else {
            None
        };
        Ok(Reconstruction {
            v_star,
            u_star,
            coefficients: c,
        })
    }
}

pub fn stability_constant(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<StabilityResult> {
    Ok(PbdwSolver::new(a, b)?.stability)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub v_star: GridFunction,
    pub u_star: Option<GridFunction>,
    pub coefficients: DVector<f64>,
}

pub fn reconstruct(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    obs: &ObservationOperator,
    z: &DVector<f64>,
    include_w_correction: bool,
) -> Result<Reconstruction> {
    PbdwSolver::new(a, b)?.reconstruct(basis, obs, z, include_w_correction, DEFAULT_BETA_FLOOR)
}

/// V-orthogonal projection onto the span of a V-orthonormal stacked basis.
pub fn project(grid: &SpatialGrid, basis: &DMatrix<f64>, u: &GridFunction) -> Result<GridFunction> {
    let w = grid.quadrature().weight;
    let x = u.to_stacked();
    let coeffs = basis.tr_mul(&x) * w;
    GridFunction::from_stacked(*grid, (basis * coeffs).as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub err: f64,
    pub proj_err: f64,
    pub bound: f64,
    pub ham_err: f64,
    pub ham_drift_truth: f64,
    pub ham_drift_rec: f64,
    /// `H(u)` and `H(v*)` at this time, to serve as later drift references.
    pub ham_truth: f64,
    pub ham_rec: f64,
}

/// Error diagnostics of `v*` against the truth. `reference` holds the
/// Hamiltonians of the truth and of the reconstruction at the initial time;
/// without it the drifts are zero.
pub fn error_report<H>(
    u_truth: &GridFunction,
    rec: &Reconstruction,
    basis: &DMatrix<f64>,
    beta: f64,
    hamiltonian: H,
    reference: Option<(f64, f64)>,
) -> Result<ErrorReport>
where
    H: Fn(&GridFunction) -> f64,
{
    let err = norm(&u_truth.sub(&rec.v_star));
    let proj = project(&u_truth.grid, basis, u_truth)?;
    let proj_err = norm(&u_truth.sub(&proj));
    let bound = if beta > 0.0 { proj_err / beta } else { f64::INFINITY };
    let ham_truth = hamiltonian(u_truth);
    let ham_rec = hamiltonian(&rec.v_star);
    let (h0t, h0r) = reference.unwrap_or((ham_truth, ham_rec));
    Ok(ErrorReport {
        err,
        proj_err,
        bound,
        ham_err: (ham_truth - ham_rec).abs(),
        ham_drift_truth: (ham_truth - h0t).abs(),
        ham_drift_rec: (ham_rec - h0r).abs(),
        ham_truth,
        ham_rec,
    })
}

/// Maxima over the test parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMax {
    pub err: f64,
    pub proj_err: f64,
    pub bound: f64,
    pub ham_err: f64,
    pub ham_drift_truth: f64,
    pub ham_drift_rec: f64,
}

pub fn sweep_max(reports: &[ErrorReport]) -> Result<SweepMax> {
    if reports.is_empty() {
        return Err(Error::Empty("error reports"));
    }
    let max = |f: fn(&ErrorReport) -> f64| reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(SweepMax {
        err: max(|r| r.err),
        proj_err: max(|r| r.proj_err),
        bound: max(|r| r.bound),
        ham_err: max(|r| r.ham_err),
        ham_drift_truth: max(|r| r.ham_drift_truth),
        ham_drift_rec: max(|r| r.ham_drift_rec),
    })
}
