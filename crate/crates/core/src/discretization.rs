//! Periodic uniform grids, quadrature, and finite-difference operators.
//!
//! A grid covers `[-L_x, L_x)` (and `[-L_y, L_y)` in 2D) with the duplicate
//! periodic endpoint excluded, so all quadrature weights are equal to the
//! cell volume `h_x h_y`. Two-dimensional fields are stored row-major with
//! `y` as the slow index: `idx = iy * N_x + ix`.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    half_extents: [f64; 2],
    counts: [usize; 2],
}

impl SpatialGrid {
    pub fn new_1d(half_extent: f64, count: usize) -> Result<Self> {
        Self::build(1, [half_extent, 0.0], [count, 1])
    }

    pub fn new_2d(half_extents: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        Self::build(2, half_extents, counts)
    }

    fn build(dim: usize, half_extents: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if !(half_extents[axis].is_finite() && half_extents[axis] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "half extent along axis {axis} must be positive, got {}",
                    half_extents[axis]
                )));
            }
            if counts[axis] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "need at least 2 points along axis {axis}, got {}",
                    counts[axis]
                )));
            }
        }
        Ok(Self {
            dim,
            half_extents,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn half_extents(&self) -> [f64; 2] {
        self.half_extents
    }

    /// Mesh width `2L/N` along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_extents[axis] / self.counts[axis] as f64
    }

    /// Number of spatial points `N`; a phase-space field has `2N` entries.
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn quadrature(&self) -> QuadratureRule {
        let weight = (0..self.dim).map(|a| self.spacing(a)).product();
        QuadratureRule { weight }
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -self.half_extents[axis] + i as f64 * self.spacing(axis)
    }

    /// Physical coordinates of the flat index `idx` (`y` is 0 in 1D).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let nx = self.counts[0];
        let (ix, iy) = (idx % nx, idx / nx);
        let y = if self.dim == 2 {
            self.coordinate(1, iy)
        } else {
            0.0
        };
        [self.coordinate(0, ix), y]
    }

    /// Wraps a coordinate into `[-L, L)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.half_extents[axis];
        let period = 2.0 * l;
        let w = (x + l).rem_euclid(period) - l;
        if w >= l {
            w - period
        } else {
            w
        }
    }

    /// Minimum-image displacement along `axis`.
    pub fn min_image(&self, axis: usize, dx: f64) -> f64 {
        let period = 2.0 * self.half_extents[axis];
        dx - period * (dx / period).round()
    }

    fn check_same(&self, other: &SpatialGrid) -> Result<()> {
        if !self.matches(other) {
            return Err(Error::Dimension(format!(
                "grid mismatch: {:?} vs {:?}",
                self.counts, other.counts
            )));
        }
        Ok(())
    }

    pub(crate) fn write_header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for axis in 0..self.dim {
            w.write_all(&(self.counts[axis] as u64).to_le_bytes())?;
        }
        for axis in 0..self.dim {
            w.write_all(&self.spacing(axis).to_le_bytes())?;
        }
        Ok(())
    }

    /// Size in bytes of the serialized header.
    pub fn header_len(&self) -> usize {
        8 * (1 + 2 * self.dim)
    }

    fn read_header<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let dim = read_u64(r).map_err(|e| e.to_string())? as usize;
        if dim != 1 && dim != 2 {
            return Err(format!("unsupported dimension {dim}"));
        }
        let mut counts = [1usize; 2];
        let mut half = [0.0f64; 2];
        for c in counts.iter_mut().take(dim) {
            *c = read_u64(r).map_err(|e| e.to_string())? as usize;
        }
        for axis in 0..dim {
            let h = read_f64(r).map_err(|e| e.to_string())?;
            if !(h.is_finite() && h > 0.0) {
                return Err(format!("invalid spacing {h}"));
            }
            if counts[axis] < 2 || counts[axis] > (1 << 28) {
                return Err(format!("invalid point count {}", counts[axis]));
            }
            half[axis] = 0.5 * h * counts[axis] as f64;
        }
        SpatialGrid::build(dim, half, counts).map_err(|e| e.to_string())
    }

    /// Whether `other` describes the same grid up to round-off in the stored spacings.
    pub fn matches(&self, other: &SpatialGrid) -> bool {
        self.dim == other.dim
            && self.counts == other.counts
            && (0..self.dim).all(|a| {
                (self.half_extents[a] - other.half_extents[a]).abs()
                    <= 1e-12 * self.half_extents[a].abs()
            })
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Equal-weight rectangle rule on a periodic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    pub weight: f64,
}

impl QuadratureRule {
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weight * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn integrate(&self, a: &[f64]) -> f64 {
        self.weight * a.iter().sum::<f64>()
    }
}

/// A phase-space field `u = (u^q, u^p)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: SpatialGrid,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: SpatialGrid, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if q.len() != n || p.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} samples per component, got q={}, p={}",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite grid values".into()));
        }
        Ok(Self { grid, q, p })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            q: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    /// Builds a field from the stacked vector `[q; p]` of length `2N`.
    pub fn from_stacked(grid: SpatialGrid, stacked: &[f64]) -> Result<Self> {
        let n = grid.len();
        if stacked.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "stacked vector has length {}, expected {}",
                stacked.len(),
                2 * n
            )));
        }
        Ok(Self {
            grid,
            q: stacked[..n].to_vec(),
            p: stacked[n..].to_vec(),
        })
    }

    pub fn to_stacked(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.q.len(), self.q.iter().chain(&self.p).copied())
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            q: self.q.iter().map(|v| s * v).collect(),
            p: self.p.iter().map(|v| s * v).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &GridFunction) -> Self {
        Self {
            grid: self.grid,
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + s * b).collect(),
            p: self.p.iter().zip(&other.p).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.add_scaled(-1.0, other)
    }

    /// Cyclic shift by whole grid cells (`shift[1]` is ignored in 1D).
    pub fn shifted(&self, shift: [isize; 2]) -> Self {
        let shift_one = |v: &[f64]| shift_field(&self.grid, v, shift);
        Self {
            grid: self.grid,
            q: shift_one(&self.q),
            p: shift_one(&self.p),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.grid.write_header(w)?;
        self.write_payload(w)
    }

    pub(crate) fn write_payload<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for v in self.q.iter().chain(&self.p) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub(crate) fn read_payload<R: Read>(grid: SpatialGrid, r: &mut R) -> std::io::Result<Self> {
        let n = grid.len();
        let mut bytes = vec![0u8; 16 * n];
        r.read_exact(&mut bytes)?;
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            grid,
            q: vals[..n].to_vec(),
            p: vals[n..].to_vec(),
        })
    }

    /// Reads a single field written by [`GridFunction::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let grid = SpatialGrid::read_header(r)?;
        Self::read_payload(grid, r).map_err(|e| format!("truncated payload: {e}"))
    }

    pub(crate) fn read_grid_header<R: Read>(r: &mut R) -> std::result::Result<SpatialGrid, String> {
        SpatialGrid::read_header(r)
    }
}

/// `<f, g>_V = w (f.q . g.q + f.p . g.p)`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    let quad = f.grid.quadrature();
    Ok(quad.dot(&f.q, &g.q) + quad.dot(&f.p, &g.p))
}

pub fn norm(f: &GridFunction) -> f64 {
    let quad = f.grid.quadrature();
    (quad.dot(&f.q, &f.q) + quad.dot(&f.p, &f.p)).sqrt()
}

#[inline]
fn neighbor(i: usize, n: usize, offset: isize) -> usize {
    (i as isize + offset).rem_euclid(n as isize) as usize
}

fn shift_field(grid: &SpatialGrid, f: &[f64], shift: [isize; 2]) -> Vec<f64> {
    let [nx, ny] = grid.counts();
    let sy = if grid.dim() == 2 { shift[1] } else { 0 };
    let mut out = vec![0.0; f.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let jx = neighbor(ix, nx, shift[0]);
            let jy = neighbor(iy, ny, sy);
            out[jy * nx + jx] = f[iy * nx + ix];
        }
    }
    out
}

/// Periodic 3-point (1D) or 5-point (2D) Laplacian.
pub fn laplacian(grid: &SpatialGrid, f: &[f64]) -> Vec<f64> {
    let [nx, ny] = grid.counts();
    let mut out = vec![0.0; f.len()];
    let hx2 = grid.spacing(0).powi(2);
    for iy in 0..ny {
        let row = iy * nx;
        for ix in 0..nx {
            let c = f[row + ix];
            let l = f[row + neighbor(ix, nx, -1)];
            let r = f[row + neighbor(ix, nx, 1)];
            out[row + ix] = (l - 2.0 * c + r) / hx2;
        }
    }
    if grid.dim() == 2 {
        let hy2 = grid.spacing(1).powi(2);
        for iy in 0..ny {
            let down = neighbor(iy, ny, -1) * nx;
            let up = neighbor(iy, ny, 1) * nx;
            for ix in 0..nx {
                let c = f[iy * nx + ix];
                out[iy * nx + ix] += (f[down + ix] - 2.0 * c + f[up + ix]) / hy2;
            }
        }
    }
    out
}

/// Centered second-order periodic first derivative along `axis`.
pub fn derivative(grid: &SpatialGrid, f: &[f64], axis: usize) -> Vec<f64> {
    let [nx, ny] = grid.counts();
    let inv = 1.0 / (2.0 * grid.spacing(axis));
    let mut out = vec![0.0; f.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let (a, b) = if axis == 0 {
                (
                    iy * nx + neighbor(ix, nx, 1),
                    iy * nx + neighbor(ix, nx, -1),
                )
            } else {
                (
                    neighbor(iy, ny, 1) * nx + ix,
                    neighbor(iy, ny, -1) * nx + ix,
                )
            };
            out[iy * nx + ix] = (f[a] - f[b]) * inv;
        }
    }
    out
}

/// Centered gradient, one component per axis.
pub fn gradient(grid: &SpatialGrid, f: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.dim()).map(|a| derivative(grid, f, a)).collect()
}

/// Sum of centered derivatives of the components; the negative adjoint of [`gradient`].
pub fn divergence(grid: &SpatialGrid, components: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (axis, c) in components.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(derivative(grid, c, axis)) {
            *o += d;
        }
    }
    out
}

/// Forward-difference derivative along `axis`; `sum (D+ f)^2 = -sum f Lap f` on the periodic grid.
pub fn forward_difference(grid: &SpatialGrid, f: &[f64], axis: usize) -> Vec<f64> {
    let [nx, ny] = grid.counts();
    let inv = 1.0 / grid.spacing(axis);
    let mut out = vec![0.0; f.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let a = if axis == 0 {
                iy * nx + neighbor(ix, nx, 1)
            } else {
                neighbor(iy, ny, 1) * nx + ix
            };
            out[iy * nx + ix] = (f[a] - f[iy * nx + ix]) * inv;
        }
    }
    out
}
