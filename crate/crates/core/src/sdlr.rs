//! Symplectic dynamical low-rank evolution of the reduced space.
//!
//! Bases are restricted to the block form `V = [Phi, -Psi; Psi, Phi]`, stored
//! as the complex matrix `Z = Phi + i Psi`. With `u = q + i p`, the operator
//! `J(q, p) = (p, -q)` is multiplication by `-i`, so `J V = V J_2n` holds for
//! every such `V`, and V-orthonormality of the real basis is equivalent to
//! `w Z^H Z = I`.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::discretization::{GridFunction, SpatialGrid};
use crate::error::{Error, Result};
use crate::linalg::{apply_j_rows, canonical_j, max_abs};
use crate::models::{ModelSpec, Theta};

type C64 = Complex<f64>;

/// Condition number of `S` above which a Tikhonov shift is applied.
pub const S_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthosymplecticBasis {
    pub grid: SpatialGrid,
    z: DMatrix<C64>,
}

impl OrthosymplecticBasis {
    /// Wraps `Z = Phi + i Psi` after re-orthonormalizing it.
    pub fn from_parts(grid: SpatialGrid, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<Self> {
        let (phi, psi) = retract(&grid, phi, psi)?;
        Ok(Self {
            grid,
            z: to_complex(&phi, &psi),
        })
    }

    pub fn n(&self) -> usize {
        self.z.ncols()
    }

    pub fn phi(&self) -> DMatrix<f64> {
        self.z.map(|c| c.re)
    }

    pub fn psi(&self) -> DMatrix<f64> {
        self.z.map(|c| c.im)
    }

    pub fn complex(&self) -> &DMatrix<C64> {
        &self.z
    }

    /// The real `2N x 2n` matrix `[Phi, -Psi; Psi, Phi]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (nn, n) = self.z.shape();
        let mut v = DMatrix::zeros(2 * nn, 2 * n);
        for j in 0..n {
            for i in 0..nn {
                let c = self.z[(i, j)];
                v[(i, j)] = c.re;
                v[(nn + i, j)] = c.im;
                v[(i, n + j)] = -c.im;
                v[(nn + i, n + j)] = c.re;
            }
        }
        v
    }

    /// `max |w V^T V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = self.matrix();
        let w = self.grid.quadrature().weight;
        let g = v.tr_mul(&v) * w - DMatrix::identity(v.ncols(), v.ncols());
        max_abs(&g)
    }

    /// `max |w V^T J_2N V - J_2n|`.
    pub fn symplecticity_defect(&self) -> f64 {
        let v = self.matrix();
        let w = self.grid.quadrature().weight;
        let g = v.tr_mul(&apply_j_rows(&v)) * w - canonical_j(self.n());
        max_abs(&g)
    }

    /// Coefficients `<u, v_s>` of a field in this basis.
    pub fn coefficients_of(&self, u: &GridFunction) -> DVector<f64> {
        self.matrix().tr_mul(&u.to_stacked()) * self.grid.quadrature().weight
    }

    pub fn synthesize(&self, c: &DVector<f64>) -> GridFunction {
        let x = self.matrix() * c;
        GridFunction::from_stacked(self.grid, x.as_slice()).expect("basis rows match the grid")
    }
}

fn to_complex(phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> DMatrix<C64> {
    DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, j| C64::new(phi[(i, j)], psi[(i, j)]))
}

/// Orthonormalizes the columns of `Z = Phi + i Psi` in the weighted metric
/// by a complex QR factorization with positive real diagonal of `R`. The
/// column span is preserved.
pub fn retract(grid: &SpatialGrid, phi: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if phi.shape() != psi.shape() || phi.nrows() != grid.len() {
        return Err(Error::Dimension(format!(
            "Phi {:?}, Psi {:?} on a grid of {} points",
            phi.shape(),
            psi.shape(),
            grid.len()
        )));
    }
    let z = retract_complex(grid, &to_complex(phi, psi))?;
    Ok((z.map(|c| c.re), z.map(|c| c.im)))
}

fn retract_complex(grid: &SpatialGrid, z: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = z.ncols();
    if n == 0 || n > z.nrows() {
        return Err(Error::Dimension(format!("cannot orthonormalize {n} columns")));
    }
    if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::RankDeficient {
            requested: n,
            effective: 0,
        });
    }
    let sw = grid.quadrature().weight.sqrt();
    let qr = (z * C64::new(sw, 0.0)).qr();
    let r = qr.r();
    let mut q = qr.q();
    let rmax = (0..n).map(|j| r[(j, j)].norm()).fold(0.0, f64::max);
    let effective = (0..n).filter(|&j| r[(j, j)].norm() > 1e-12 * rmax).count();
    if effective < n {
        return Err(Error::RankDeficient {
            requested: n,
            effective,
        });
    }
    for j in 0..n {
        let d = r[(j, j)];
        let phase = d / d.norm();
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    Ok(q / C64::new(sw, 0.0))
}

/// Coefficients `C` (rows indexed by the training parameters) with uniform
/// weights `1 / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEnsemble {
    pub thetas: Vec<Theta>,
    pub c: DMatrix<f64>,
}

impl CoefficientEnsemble {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// `u_2n(theta_k) = V c_k^T`.
    pub fn reconstruction(&self, basis: &OrthosymplecticBasis, k: usize) -> GridFunction {
        basis.synthesize(&self.c.row(k).transpose())
    }
}

/// Projects the initial conditions of `thetas` onto the rank-`n` complex
/// principal subspace of the complexified snapshots `q + i p`.
pub fn initialize(spec: &ModelSpec, thetas: &[Theta], n: usize) -> Result<(OrthosymplecticBasis, CoefficientEnsemble)> {
    if thetas.is_empty() {
        return Err(Error::Empty("training parameters"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("rank must be positive".into()));
    }
    let grid = spec.grid;
    let nn = grid.len();
    let w = grid.quadrature().weight;
    let snaps: Vec<GridFunction> = thetas
        .iter()
        .map(|t| spec.initial_condition(*t))
        .collect::<Result<_>>()?;
    let s = DMatrix::from_fn(nn, snaps.len(), |i, k| C64::new(snaps[k].q[i], snaps[k].p[i]));
    let (u, sv) = complex_left_singular(&(&s * C64::new(w.sqrt(), 0.0)));
    let s0 = sv.first().copied().unwrap_or(0.0);
    let effective = sv.iter().filter(|&&x| x > 1e-12 * s0 && s0 > 0.0).count();
    if n > effective {
        return Err(Error::RankDeficient {
            requested: n,
            effective,
        });
    }
    let z = u.columns(0, n) / C64::new(w.sqrt(), 0.0);
    let z = retract_complex(&grid, &z)?;
    let basis = OrthosymplecticBasis { grid, z };
    let v = basis.matrix();
    let mut c = DMatrix::zeros(snaps.len(), 2 * n);
    for (k, u0) in snaps.iter().enumerate() {
        let ck = v.tr_mul(&u0.to_stacked()) * w;
        c.row_mut(k).copy_from(&ck.transpose());
    }
    Ok((
        basis,
        CoefficientEnsemble {
            thetas: thetas.to_vec(),
            c,
        },
    ))
}

/// Left singular vectors sorted by decreasing singular value.
pub(crate) fn complex_left_singular(s: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let mut svd = s.clone().svd(true, false);
    svd.sort_by_singular_values();
    let u = svd.u.expect("left singular vectors requested");
    (u, svd.singular_values.iter().copied().collect())
}

/// `S(C) = C^T W C + J^T (C^T W C) J` with `W = I / K`.
pub fn s_matrix(ens: &CoefficientEnsemble) -> DMatrix<f64> {
    let k = ens.c.ncols();
    if ens.is_empty() {
        return DMatrix::zeros(k, k);
    }
    let g = ens.c.tr_mul(&ens.c) * ens.weight();
    let j = canonical_j(k / 2);
    &g + j.transpose() * &g * &j
}

#[derive(Debug, Clone)]
pub struct DlrVelocity {
    /// `dV/dt`, `2N x 2n`, in block form.
    pub basis: DMatrix<f64>,
    /// `dC/dt`, `K x 2n`.
    pub coefficients: DMatrix<f64>,
    /// Whether `S` needed the Tikhonov shift.
    pub shifted: bool,
}

/// Right-hand side of the coupled basis / coefficient equations:
/// `V' S = P_perp (G1 + J G1 J_2n^T)` with `G1 = sum_k w_k f_k c_k`, and
/// `c_k' = <f_k, V>`, where `f_k = P_theta_k(V c_k^T)`.
pub fn dlr_rhs(spec: &ModelSpec, basis: &OrthosymplecticBasis, ens: &CoefficientEnsemble) -> Result<DlrVelocity> {
    let v = basis.matrix();
    let n2 = v.ncols();
    if ens.c.ncols() != n2 {
        return Err(Error::Dimension(format!(
            "coefficients have {} columns, basis {}",
            ens.c.ncols(),
            n2
        )));
    }
    let w = basis.grid.quadrature().weight;
    let kk = ens.len();
    let fields: Vec<DVector<f64>> = (0..kk)
        .into_par_iter()
        .map(|k| {
            let u = basis.synthesize(&ens.c.row(k).transpose());
            spec.vector_field(ens.thetas[k], &u).to_stacked()
        })
        .collect();
    let f = DMatrix::from_columns(&fields);
    let g1 = &f * &ens.c * ens.weight();
    let j = canonical_j(n2 / 2);
    let g = &g1 + apply_j_rows(&g1) * j.transpose();
    let g_perp = &g - &v * (v.tr_mul(&g) * w);

    let mut s = s_matrix(ens);
    let trace = s.trace();
    if !(trace > 0.0) || s.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankCollapse { trace });
    }
    let cond = crate::linalg::spd_condition(&s);
    let shifted = !(cond <= S_CONDITION_LIMIT);
    if shifted {
        let delta = 1e-12 * trace / n2 as f64;
        for i in 0..n2 {
            s[(i, i)] += delta;
        }
    }
    let chol = s.cholesky().ok_or(Error::RankCollapse { trace })?;
    let vel = chol.solve(&g_perp.transpose()).transpose();
    let cdot = (v.tr_mul(&f) * w).transpose();
    Ok(DlrVelocity {
        basis: vel,
        coefficients: cdot,
        shifted,
    })
}

/// Complex form of a block-structured `2N x 2n` matrix.
fn block_to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    let nn = m.nrows() / 2;
    let n = m.ncols() / 2;
    DMatrix::from_fn(nn, n, |i, j| {
        C64::new(
            0.5 * (m[(i, j)] + m[(nn + i, n + j)]),
            0.5 * (m[(nn + i, j)] - m[(i, n + j)]),
        )
    })
}

/// Retracts a raw basis and re-expresses the raw reconstruction
/// `V_raw C^T` in it.
fn retract_and_reproject(
    grid: &SpatialGrid,
    z_raw: &DMatrix<C64>,
    c_raw: &DMatrix<f64>,
) -> Result<(OrthosymplecticBasis, DMatrix<f64>)> {
    let z = retract_complex(grid, z_raw)?;
    let raw = OrthosymplecticBasis { grid: *grid, z: z_raw.clone() };
    let new = OrthosymplecticBasis { grid: *grid, z };
    let w = grid.quadrature().weight;
    let t = new.matrix().tr_mul(&raw.matrix()) * w;
    Ok((new, c_raw * t.transpose()))
}

/// One explicit midpoint step of the coupled system, retracting the basis at
/// the half and full stages.
pub fn dlr_step(
    spec: &ModelSpec,
    basis: &OrthosymplecticBasis,
    ens: &CoefficientEnsemble,
    dt: f64,
) -> Result<(OrthosymplecticBasis, CoefficientEnsemble)> {
    let grid = basis.grid;
    let k1 = dlr_rhs(spec, basis, ens)?;
    let z_half = &basis.z + block_to_complex(&k1.basis) * C64::new(0.5 * dt, 0.0);
    let c_half = &ens.c + &k1.coefficients * (0.5 * dt);
    let (b_half, c_half) = retract_and_reproject(&grid, &z_half, &c_half)?;
    let e_half = CoefficientEnsemble {
        thetas: ens.thetas.clone(),
        c: c_half,
    };
    let k2 = dlr_rhs(spec, &b_half, &e_half)?;
    let z_new = &basis.z + block_to_complex(&k2.basis) * C64::new(dt, 0.0);
    let c_new = &ens.c + &k2.coefficients * dt;
    let (b_new, c_new) = retract_and_reproject(&grid, &z_new, &c_new)?;
    Ok((
        b_new,
        CoefficientEnsemble {
            thetas: ens.thetas.clone(),
            c: c_new,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::norm;
    use crate::models::{ModelKind, ParameterGrid};
    use crate::pbdw::project;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nls(n_grid: usize) -> ModelSpec {
        ModelSpec::new(ModelKind::Nls1d, SpatialGrid::new_1d(12.0, n_grid).unwrap()).unwrap()
    }

    fn thetas(spec: &ModelSpec, k: usize) -> Vec<Theta> {
        ParameterGrid::uniform(spec.parameter_box, k).unwrap().theta_h
    }

    fn random_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn initialization_is_orthosymplectic() {
        let spec = nls(128);
        let th = thetas(&spec, 3);
        // the NLS initial datum depends on theta_1 only: 3 distinct snapshots
        let (basis, ens) = initialize(&spec, &th, 3).unwrap();
        assert!(basis.orthonormality_defect() <= 1e-10);
        assert!(basis.symplecticity_defect() <= 1e-10);
        assert_eq!(ens.c.shape(), (9, 6));
    }

    #[test]
    fn single_snapshot_is_exact() {
        let spec = nls(128);
        let th = [Theta([1.04, 1.04])];
        let (basis, ens) = initialize(&spec, &th, 1).unwrap();
        let u0 = spec.initial_condition(th[0]).unwrap();
        let p = project(&spec.grid, &basis.matrix(), &u0).unwrap();
        assert!(norm(&u0.sub(&p)) <= 1e-10 * norm(&u0));
        assert!(norm(&u0.sub(&ens.reconstruction(&basis, 0))) <= 1e-10 * norm(&u0));
    }

    #[test]
    fn projection_error_matches_singular_tail() {
        let spec = nls(128);
        let th = thetas(&spec, 3);
        let n = 2;
        let (basis, ens) = initialize(&spec, &th, n).unwrap();
        let w = spec.grid.quadrature().weight;
        // independent oracle: eigenvalues of the K x K Hermitian Gram matrix
        let snaps: Vec<GridFunction> = th.iter().map(|t| spec.initial_condition(*t).unwrap()).collect();
        let k = snaps.len();
        let gram = DMatrix::from_fn(k, k, |a, b| {
            let (x, y) = (&snaps[a], &snaps[b]);
            let re: f64 = (0..x.len()).map(|i| x.q[i] * y.q[i] + x.p[i] * y.p[i]).sum();
            let im: f64 = (0..x.len()).map(|i| x.q[i] * y.p[i] - x.p[i] * y.q[i]).sum();
            C64::new(re * w, im * w)
        });
        let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let tail: f64 = eig[n..].iter().map(|e| e.max(0.0)).sum::<f64>().sqrt();
        let err: f64 = (0..k)
            .map(|i| norm(&snaps[i].sub(&ens.reconstruction(&basis, i))).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((err - tail).abs() <= 1e-8 * eig[0].sqrt(), "{err} vs {tail}");
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let spec = ModelSpec::new(ModelKind::Swe1d, SpatialGrid::new_1d(10.0, 64).unwrap()).unwrap();
        let th = thetas(&spec, 2);
        assert!(matches!(
            initialize(&spec, &th, 5),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn s_matrix_identities() {
        let ens = CoefficientEnsemble {
            thetas: vec![Theta([0.0, 0.0]); 4],
            c: DMatrix::identity(4, 4) * 2.0,
        };
        // C^T W C = I
        assert!((s_matrix(&ens) - DMatrix::identity(4, 4) * 2.0).amax() < 1e-15);
        let zero = CoefficientEnsemble {
            thetas: vec![Theta([0.0, 0.0]); 3],
            c: DMatrix::zeros(3, 6),
        };
        assert_eq!(s_matrix(&zero), DMatrix::zeros(6, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let ens = CoefficientEnsemble {
            thetas: vec![Theta([0.0, 0.0]); 5],
            c: c.clone(),
        };
        let j = canonical_j(3);
        let mut naive = DMatrix::zeros(6, 6);
        for a in 0..6 {
            for b in 0..6 {
                for k in 0..5 {
                    naive[(a, b)] += 0.2 * c[(k, a)] * c[(k, b)];
                    for x in 0..6 {
                        for y in 0..6 {
                            naive[(a, b)] += 0.2 * j[(x, a)] * c[(k, x)] * c[(k, y)] * j[(y, b)];
                        }
                    }
                }
            }
        }
        assert!((s_matrix(&ens) - naive).amax() < 1e-12);
        let s = s_matrix(&ens);
        assert!((&s * &j - &j * &s).amax() < 1e-12);
    }

    #[test]
    fn retraction_properties() {
        let grid = SpatialGrid::new_1d(3.0, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_complex(40, 3, &mut rng);
        let (phi, psi) = retract(&grid, &z.map(|c| c.re), &z.map(|c| c.im)).unwrap();
        let b = OrthosymplecticBasis {
            grid,
            z: to_complex(&phi, &psi),
        };
        assert!(b.orthonormality_defect() <= 1e-12);
        assert!(b.symplecticity_defect() <= 1e-12);
        // idempotence
        let (phi2, psi2) = retract(&grid, &phi, &psi).unwrap();
        assert!((&phi2 - &phi).amax() <= 1e-12 && (&psi2 - &psi).amax() <= 1e-12);
        // complex span preserved: projector onto span_C(Z) unchanged
        let w = grid.quadrature().weight;
        let zq = b.complex().clone();
        let raw_q = {
            let g = z.adjoint() * &z;
            &z * g.try_inverse().unwrap() * z.adjoint()
        };
        let new_q = &zq * zq.adjoint() * C64::new(w, 0.0);
        assert!((raw_q - new_q).map(|c| c.norm()).max() <= 1e-10);
        // rank deficiency
        let mut bad = z.clone();
        let c0 = bad.column(0).into_owned();
        bad.column_mut(2).copy_from(&(c0 * C64::new(0.0, 2.0)));
        assert!(retract(&grid, &bad.map(|c| c.re), &bad.map(|c| c.im)).is_err());
    }

    fn random_ensemble(spec: &ModelSpec, n: usize, rng: &mut ChaCha8Rng) -> (OrthosymplecticBasis, CoefficientEnsemble) {
        let th = thetas(spec, 3);
        let (basis, mut ens) = initialize(spec, &th, n).unwrap();
        for v in ens.c.iter_mut() {
            *v += 0.05 * rng.random_range(-1.0..1.0);
        }
        (basis, ens)
    }

    #[test]
    fn velocity_is_orthogonal_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = nls(128);
        let (basis, ens) = random_ensemble(&spec, 3, &mut rng);
        let vel = dlr_rhs(&spec, &basis, &ens).unwrap();
        let w = spec.grid.quadrature().weight;
        let v = basis.matrix();
        assert!((v.tr_mul(&vel.basis) * w).amax() <= 1e-10 * vel.basis.amax().max(1.0));
        let j = canonical_j(3);
        let diff = &vel.basis * &j - apply_j_rows(&vel.basis);
        assert!(diff.amax() <= 1e-9 * vel.basis.amax().max(1.0));
    }

    #[test]
    fn velocity_vanishes_for_fields_in_span() {
        // eps = 0 and a basis spanned by exact Laplacian eigenmodes: the
        // linear field maps span(V) into itself.
        let grid = SpatialGrid::new_1d(std::f64::consts::PI, 64).unwrap();
        let spec = ModelSpec::new(ModelKind::Nls1d, grid).unwrap().with_box([[0.5, 1.5], [0.0, 0.0]]);
        let mut phi = DMatrix::zeros(64, 2);
        let psi = DMatrix::zeros(64, 2);
        for i in 0..64 {
            let x = grid.coordinate(0, i);
            phi[(i, 0)] = (2.0 * x).cos();
            phi[(i, 1)] = (3.0 * x).sin();
        }
        let basis = OrthosymplecticBasis::from_parts(grid, &phi, &psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ens = CoefficientEnsemble {
            thetas: vec![Theta([1.0, 0.0]); 5],
            c: DMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0)),
        };
        let vel = dlr_rhs(&spec, &basis, &ens).unwrap();
        assert!(vel.basis.amax() <= 1e-10);
    }

    #[test]
    fn linear_velocity_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = SpatialGrid::new_1d(12.0, 128).unwrap();
        let spec = ModelSpec::new(ModelKind::Nls1d, grid).unwrap().with_box([[0.9, 1.1], [0.0, 0.0]]);
        let th: Vec<Theta> = [0.9, 0.95, 1.0, 1.05, 1.1].iter().map(|a| Theta([*a, 0.0])).collect();
        let (basis, mut ens) = initialize(&spec, &th, 2).unwrap();
        for v in ens.c.iter_mut() {
            *v += 0.05 * rng.random_range(-1.0..1.0);
        }
        let a = dlr_rhs(&spec, &basis, &ens).unwrap();
        let scaled = CoefficientEnsemble {
            thetas: ens.thetas.clone(),
            c: &ens.c * 2.0,
        };
        let b = dlr_rhs(&spec, &basis, &scaled).unwrap();
        assert!((&a.basis - &b.basis).amax() <= 1e-10 * a.basis.amax());
        assert!((&a.coefficients * 2.0 - &b.coefficients).amax() <= 1e-10 * b.coefficients.amax());
    }

    #[test]
    fn zero_field_step_is_identity() {
        let spec = ModelSpec::new(ModelKind::Swe1d, SpatialGrid::new_1d(10.0, 64).unwrap()).unwrap();
        let grid = spec.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random_complex(64, 2, &mut rng);
        let basis = OrthosymplecticBasis::from_parts(grid, &z.map(|c| c.re), &z.map(|c| c.im)).unwrap();
        // zero states are stationary for the shallow water field
        let ens = CoefficientEnsemble {
            thetas: vec![Theta([0.12, 0.5]); 3],
            c: DMatrix::zeros(3, 4),
        };
        assert!(matches!(dlr_rhs(&spec, &basis, &ens), Err(Error::RankCollapse { .. })));
        // nonzero coefficients on a zero field: NLS with a zero basis response
        let spec0 = ModelSpec::new(ModelKind::Nls1d, grid).unwrap();
        let phi = DMatrix::from_element(64, 1, 1.0);
        let psi = DMatrix::zeros(64, 1);
        let flat = OrthosymplecticBasis::from_parts(grid, &phi, &psi).unwrap();
        let ens = CoefficientEnsemble {
            thetas: vec![Theta([1.0, 0.0]); 2],
            c: DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]),
        };
        let (b2, e2) = dlr_step(&spec0, &flat, &ens, 0.1).unwrap();
        assert!((b2.matrix() - flat.matrix()).amax() <= 1e-12);
        assert!((&e2.c - &ens.c).amax() <= 1e-12);
    }

    #[test]
    fn steps_keep_invariants_and_continuity() {
        let spec = nls(128);
        let th = thetas(&spec, 3);
        let (mut basis, mut ens) = initialize(&spec, &th, 3).unwrap();
        for _ in 0..20 {
            let before: Vec<GridFunction> = (0..ens.len()).map(|k| ens.reconstruction(&basis, k)).collect();
            let (b, e) = dlr_step(&spec, &basis, &ens, 0.01).unwrap();
            assert!(b.orthonormality_defect() <= 1e-10);
            assert!(b.symplecticity_defect() <= 1e-10);
            for (k, u) in before.iter().enumerate() {
                let d = norm(&e.reconstruction(&b, k).sub(u));
                assert!(d <= 0.1 * norm(u));
            }
            basis = b;
            ens = e;
        }
    }

    fn run_reduced(spec: &ModelSpec, th: &[Theta], n: usize, t: f64, steps: usize) -> Vec<GridFunction> {
        let (mut basis, mut ens) = initialize(spec, th, n).unwrap();
        let dt = t / steps as f64;
        for _ in 0..steps {
            let (b, e) = dlr_step(spec, &basis, &ens, dt).unwrap();
            basis = b;
            ens = e;
        }
        (0..ens.len()).map(|k| ens.reconstruction(&basis, k)).collect()
    }

    #[test]
    fn reduced_flow_converges_at_second_order() {
        let grid = SpatialGrid::new_1d(12.0, 96).unwrap();
        let spec = ModelSpec::new(ModelKind::Nls1d, grid).unwrap().with_box([[0.9, 1.1], [0.0, 0.0]]);
        let th: Vec<Theta> = [0.9, 1.0, 1.1].iter().map(|a| Theta([*a, 0.0])).collect();
        let t = 0.4;
        let a = run_reduced(&spec, &th, 2, t, 40);
        let b = run_reduced(&spec, &th, 2, t, 80);
        let c = run_reduced(&spec, &th, 2, t, 160);
        let diff = |x: &[GridFunction], y: &[GridFunction]| {
            x.iter().zip(y).map(|(u, v)| norm(&u.sub(v))).fold(0.0, f64::max)
        };
        let r = diff(&a, &b) / diff(&b, &c);
        assert!(r > 3.2 && r < 4.8, "ratio {r}");
    }

    #[test]
    fn quadratic_energy_drift_is_second_order() {
        let grid = SpatialGrid::new_1d(12.0, 96).unwrap();
        let spec = ModelSpec::new(ModelKind::Nls1d, grid).unwrap().with_box([[0.9, 1.1], [0.0, 0.0]]);
        let th: Vec<Theta> = [0.9, 1.0, 1.1].iter().map(|a| Theta([*a, 0.0])).collect();
        let t = 0.4;
        let drift = |steps: usize| {
            // reference: the rank-2 projection of the initial data
            let (basis, ens) = initialize(&spec, &th, 2).unwrap();
            let start: Vec<f64> = (0..3)
                .map(|k| spec.hamiltonian(th[k], &ens.reconstruction(&basis, k)))
                .collect();
            let end = run_reduced(&spec, &th, 2, t, steps);
            (0..3)
                .map(|k| (spec.hamiltonian(th[k], &end[k]) - start[k]).abs())
                .fold(0.0, f64::max)
        };
        let (d1, d2) = (drift(40), drift(80));
        assert!(d1 / d2 > 3.0, "{d1} {d2}");
    }
}
