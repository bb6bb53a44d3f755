//! Small dense helpers and a restarted GMRES used by the Newton solver.

use nalgebra::{DMatrix, DVector};

/// Canonical symplectic matrix `[0 I; -I 0]` of size `2n`.
pub fn canonical_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Applies `J(q, p) = (p, -q)` to every column of a stacked `2N x k` matrix.
pub fn apply_j_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() / 2;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        for i in 0..n {
            out[(i, c)] = m[(n + i, c)];
            out[(n + i, c)] = -m[(i, c)];
        }
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Condition number of a symmetric positive semidefinite matrix from its eigenvalues.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(f64::MIN, |a, &v| a.max(v));
    let min = eig.iter().fold(f64::MAX, |a, &v| a.min(v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Restarted GMRES for `A x = b`, starting from `x`.
///
/// Stops when `||b - A x||_2 <= tol`.
pub fn gmres<F>(
    apply: F,
    b: &DVector<f64>,
    x: &mut DVector<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let mut total = 0;
    let mut r = b - apply(x);
    let mut beta = r.norm();
    if beta <= tol {
        return GmresOutcome {
            iterations: 0,
            residual: beta,
            converged: true,
        };
    }
    let restart = restart.min(n).max(1);
    while total < max_iter {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(restart + 1);
        basis.push(&r / beta);
        let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = DVector::<f64>::zeros(restart + 1);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let mut w = apply(&basis[k]);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = w.dot(v);
                    h[(i, k)] += hij;
                    w.axpy(-hij, v, 1.0);
                }
            }
            let wn = w.norm();
            h[(k + 1, k)] = wn;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let denom = h[(k, k)].hypot(h[(k + 1, k)]);
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= tol || wn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w / wn);
        }
        // back substitution
        let mut y = DVector::<f64>::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &basis[i], 1.0);
        }
        r = b - apply(x);
        beta = r.norm();
        if beta <= tol {
            return GmresOutcome {
                iterations: total,
                residual: beta,
                converged: true,
            };
        }
    }
    GmresOutcome {
        iterations: total,
        residual: beta,
        converged: false,
    }
}
