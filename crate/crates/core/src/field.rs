//! Uniform grids, complex-valued node fields and the finite-difference
//! Wirtinger calculus everything else is built on.
//!
//! Derivative fields are defined on interior nodes only; boundary nodes and
//! any node whose stencil touches a masked node come back masked.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Rectangular grid with square cells. Node `(i, j)` sits at
/// `(x0 + i h, y0 + j h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn new(x0: f64, y0: f64, nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(LabError::GridTooSmall { nx, ny });
        }
        if !(h > 0.0) || !h.is_finite() || !x0.is_finite() || !y0.is_finite() {
            return Err(LabError::InvalidGrid(format!(
                "spacing must be positive and finite (h = {h})"
            )));
        }
        Ok(Self { x0, y0, nx, ny, h })
    }

    /// Grid spanning `[x0, x1] x [y0, y1]` with spacing `h`. Both extents must
    /// be whole multiples of `h`; rectangular cells are rejected.
    pub fn covering(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Result<Self> {
        let cells = |a: f64, b: f64| -> Result<usize> {
            let n = (b - a) / h;
            let r = n.round();
            if r < 1.0 || (n - r).abs() > 1e-9 * r.max(1.0) {
                return Err(LabError::InvalidGrid(format!(
                    "extent {} is not a whole number of cells of size {h}",
                    b - a
                )));
            }
            Ok(r as usize)
        };
        let cx = cells(x0, x1)?;
        let cy = cells(y0, y1)?;
        Self::new(x0, y0, cx + 1, cy + 1, h)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn x1(&self) -> f64 {
        self.x0 + (self.nx - 1) as f64 * self.h
    }

    pub fn y1(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.h
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i + 1 < self.nx && j + 1 < self.ny
    }

    pub fn contains(&self, p: Complex64) -> bool {
        let eps = 1e-12 * self.h;
        p.re >= self.x0 - eps && p.re <= self.x1() + eps && p.im >= self.y0 - eps && p.im <= self.y1() + eps
    }

    /// Index of the node closest to `p`, if `p` lies in the rectangle.
    pub fn nearest_node(&self, p: Complex64) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = ((p.re - self.x0) / self.h).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.im - self.y0) / self.h).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        Some((i, j))
    }

    /// Same rectangle with half the spacing.
    pub fn refined(&self) -> Self {
        Self { x0: self.x0, y0: self.y0, nx: 2 * self.nx - 1, ny: 2 * self.ny - 1, h: self.h / 2.0 }
    }

    /// Sub-rectangle of nodes `[i0, i0 + nx) x [j0, j0 + ny)`.
    pub fn sub(&self, i0: usize, j0: usize, nx: usize, ny: usize) -> Result<Self> {
        if i0 + nx > self.nx || j0 + ny > self.ny {
            return Err(LabError::InvalidGrid("sub-rectangle exceeds the grid".into()));
        }
        let o = self.node(i0, j0);
        Self::new(o.re, o.im, nx, ny, self.h)
    }

    /// Node window `(i0, j0, nx, ny)` of the centred sub-rectangle covering
    /// `fraction` of each extent.
    pub fn central_window(&self, fraction: f64) -> (usize, usize, usize, usize) {
        let pick = |n: usize| {
            let cells = n - 1;
            let keep = ((cells as f64) * fraction).round() as usize;
            let keep = keep.clamp(2, cells);
            let start = (cells - keep) / 2;
            (start, keep + 1)
        };
        let (i0, nx) = pick(self.nx);
        let (j0, ny) = pick(self.ny);
        (i0, j0, nx, ny)
    }

    /// Grids agree node for node.
    pub fn matches(&self, other: &GridSpec) -> bool {
        let tol = 1e-12 * self.h.max(1.0);
        self.nx == other.nx
            && self.ny == other.ny
            && (self.h - other.h).abs() <= tol
            && (self.x0 - other.x0).abs() <= tol
            && (self.y0 - other.y0).abs() <= tol
    }

    fn require_stencil(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            Err(LabError::GridTooSmall { nx: self.nx, ny: self.ny })
        } else {
            Ok(())
        }
    }
}

/// Complex samples on a grid, row-major in `j` then `i`, with a per-node
/// validity flag. Masked nodes hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
    valid: Vec<bool>,
}

impl ComplexField {
    pub fn from_fn(grid: GridSpec, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_fn_ij(grid, |i, j| f(grid.node(i, j)))
    }

    pub fn from_fn_ij(grid: GridSpec, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(i, j));
            }
        }
        Self::from_values_masked(grid, values, vec![true; grid.len()])
            .expect("generator produced a value count matching the grid")
    }

    pub fn from_real_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |z| Complex64::new(f(z.re, z.im), 0.0))
    }

    pub fn constant(grid: GridSpec, c: Complex64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn from_values(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        let n = values.len();
        Self::from_values_masked(grid, values, vec![true; n])
    }

    /// Non-finite entries are masked rather than rejected.
    pub fn from_values_masked(grid: GridSpec, mut values: Vec<Complex64>, mut valid: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || valid.len() != grid.len() {
            return Err(LabError::InvalidGrid(format!(
                "expected {} values, got {} (mask {})",
                grid.len(),
                values.len(),
                valid.len()
            )));
        }
        for (v, ok) in values.iter_mut().zip(valid.iter_mut()) {
            if !v.re.is_finite() || !v.im.is_finite() {
                *ok = false;
            }
            if !*ok {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self { grid, values, valid })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[self.grid.index(i, j)]
    }

    /// Value at a valid node; `None` when masked or out of range.
    pub fn get(&self, i: usize, j: usize) -> Option<Complex64> {
        (i < self.grid.nx && j < self.grid.ny && self.is_valid(i, j)).then(|| self.at(i, j))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Apply `f` to valid nodes; masked nodes stay masked.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = self.values.iter().zip(&self.valid).map(|(v, ok)| if *ok { f(*v) } else { *v }).collect();
        Self::from_values_masked(self.grid, values, self.valid.clone()).expect("same shape")
    }

    /// Like [`map`](Self::map) but with the node position.
    pub fn map_with_node(&self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let g = self.grid;
        let mut values = self.values.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if self.valid[k] {
                    values[k] = f(g.node(i, j), self.values[k]);
                }
            }
        }
        Self::from_values_masked(g, values, self.valid.clone()).expect("same shape")
    }

    /// Node-wise combination; valid only where both inputs are valid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if !self.grid.matches(&other.grid) {
            return Err(LabError::GridMismatch);
        }
        let valid: Vec<bool> = self.valid.iter().zip(&other.valid).map(|(a, b)| *a && *b).collect();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .zip(&valid)
            .map(|((a, b), ok)| if *ok { f(*a, *b) } else { Complex64::new(0.0, 0.0) })
            .collect();
        Self::from_values_masked(self.grid, values, valid)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    /// Additionally mask every node where `keep` is false.
    pub fn masked_where(&self, keep: impl Fn(usize, usize, Complex64) -> bool) -> Self {
        let g = self.grid;
        let mut valid = self.valid.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if valid[k] && !keep(i, j, self.values[k]) {
                    valid[k] = false;
                }
            }
        }
        Self::from_values_masked(g, self.values.clone(), valid).expect("same shape")
    }

    /// Copy of the node window `[i0, i0 + nx) x [j0, j0 + ny)`.
    pub fn restrict(&self, i0: usize, j0: usize, nx: usize, ny: usize) -> Result<Self> {
        let sub = self.grid.sub(i0, j0, nx, ny)?;
        let mut values = Vec::with_capacity(sub.len());
        let mut valid = Vec::with_capacity(sub.len());
        for j in 0..ny {
            for i in 0..nx {
                let k = self.grid.index(i0 + i, j0 + j);
                values.push(self.values[k]);
                valid.push(self.valid[k]);
            }
        }
        Self::from_values_masked(sub, values, valid)
    }

    /// Restriction to the centred window covering `fraction` of each extent.
    pub fn central(&self, fraction: f64) -> Result<Self> {
        let (i0, j0, nx, ny) = self.grid.central_window(fraction);
        self.restrict(i0, j0, nx, ny)
    }

    /// Valid node values in row-major order together with their indices.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        let nx = self.grid.nx;
        self.values
            .iter()
            .enumerate()
            .filter(move |(k, _)| self.valid[*k])
            .map(move |(k, v)| (k % nx, k / nx, *v))
    }

    /// Largest modulus over valid nodes (0 if none).
    pub fn max_abs(&self) -> f64 {
        self.iter_valid().fold(0.0, |m, (_, _, v)| m.max(v.norm()))
    }

    /// Largest |self - other| over nodes valid in both.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.zip_map(other, |a, b| a - b)?.max_abs())
    }

    /// Largest |self - f(node)| over valid nodes.
    pub fn max_error_against(&self, f: impl Fn(Complex64) -> Complex64) -> f64 {
        self.iter_valid().fold(0.0, |m, (i, j, v)| m.max((v - f(self.grid.node(i, j))).norm()))
    }

    /// Bounding box `(i0, j0, nx, ny)` of the valid nodes if they fill it.
    pub fn valid_rectangle(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for (i, j, _) in self.iter_valid() {
            i0 = i0.min(i);
            j0 = j0.min(j);
            i1 = i1.max(i);
            j1 = j1.max(j);
        }
        if i0 == usize::MAX {
            return None;
        }
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !self.is_valid(i, j) {
                    return None;
                }
            }
        }
        Some((i0, j0, i1 - i0 + 1, j1 - j0 + 1))
    }
}

fn stencil_field(field: &ComplexField, with_centre: bool, op: impl Fn(usize, usize) -> Complex64) -> Result<ComplexField> {
    let g = *field.grid();
    g.require_stencil()?;
    let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut valid = vec![false; g.len()];
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let ok = field.is_valid(i + 1, j)
                && field.is_valid(i - 1, j)
                && field.is_valid(i, j + 1)
                && field.is_valid(i, j - 1)
                && (!with_centre || field.is_valid(i, j));
            if ok {
                let k = g.index(i, j);
                values[k] = op(i, j);
                valid[k] = true;
            }
        }
    }
    ComplexField::from_values_masked(g, values, valid)
}

/// Central-difference `f_z = (f_x - i f_y) / 2`.
pub fn wirtinger_z(field: &ComplexField) -> Result<ComplexField> {
    let inv = 1.0 / (4.0 * field.grid().h);
    stencil_field(field, false, |i, j| {
        let dx = field.at(i + 1, j) - field.at(i - 1, j);
        let dy = field.at(i, j + 1) - field.at(i, j - 1);
        (dx - I * dy) * inv
    })
}

/// Central-difference `f_zbar = (f_x + i f_y) / 2`.
pub fn wirtinger_zbar(field: &ComplexField) -> Result<ComplexField> {
    let inv = 1.0 / (4.0 * field.grid().h);
    stencil_field(field, false, |i, j| {
        let dx = field.at(i + 1, j) - field.at(i - 1, j);
        let dy = field.at(i, j + 1) - field.at(i, j - 1);
        (dx + I * dy) * inv
    })
}

/// Five-point Laplacian `Delta_h f`.
pub fn laplacian(field: &ComplexField) -> Result<ComplexField> {
    let inv = 1.0 / (field.grid().h * field.grid().h);
    stencil_field(field, true, |i, j| {
        (field.at(i + 1, j) + field.at(i - 1, j) + field.at(i, j + 1) + field.at(i, j - 1) - 4.0 * field.at(i, j)) * inv
    })
}

/// `f_{z zbar} = Delta_h f / 4`.
pub fn mixed_zzbar(field: &ComplexField) -> Result<ComplexField> {
    Ok(laplacian(field)?.map(|v| v * 0.25))
}

/// Max of `|Delta_h u|` over interior nodes with a complete stencil, using
/// the real part of `field`.
pub fn harmonic_residual(field: &ComplexField) -> Result<f64> {
    let real = field.map(|v| Complex64::new(v.re, 0.0));
    let lap = laplacian(&real)?;
    if lap.valid_count() == 0 {
        return Err(LabError::NoValidInterior);
    }
    Ok(lap.max_abs())
}

fn cell_coordinate(origin: f64, h: f64, n: usize, x: f64) -> (usize, f64) {
    let s = ((x - origin) / h).clamp(0.0, (n - 1) as f64);
    let c = (s.floor() as usize).min(n - 2);
    (c, s - c as f64)
}

/// Bilinear interpolation from the four nodes around `p`.
pub fn bilinear_sample(field: &ComplexField, p: Complex64) -> Result<Complex64> {
    let g = field.grid();
    if !g.contains(p) {
        return Err(LabError::OutOfDomain { re: p.re, im: p.im });
    }
    let (i, tx) = cell_coordinate(g.x0, g.h, g.nx, p.re);
    let (j, ty) = cell_coordinate(g.y0, g.h, g.ny, p.im);
    let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
    if corners.iter().any(|&(a, b)| !field.is_valid(a, b)) {
        return Err(LabError::MaskedNode { re: p.re, im: p.im });
    }
    Ok(field.at(i, j) * ((1.0 - tx) * (1.0 - ty))
        + field.at(i + 1, j) * (tx * (1.0 - ty))
        + field.at(i, j + 1) * ((1.0 - tx) * ty)
        + field.at(i + 1, j + 1) * (tx * ty))
}

/// Value and partial derivatives of a local interpolant at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Complex64,
    pub dx: Complex64,
    pub dy: Complex64,
}

impl Jet {
    pub fn dz(&self) -> Complex64 {
        (self.dx - I * self.dy) * 0.5
    }

    pub fn dzbar(&self) -> Complex64 {
        (self.dx + I * self.dy) * 0.5
    }
}

/// Lagrange weights and derivative weights on nodes `0..N` at `t`.
fn lagrange_weights<const N: usize>(t: f64) -> ([f64; N], [f64; N]) {
    let mut w = [0.0; N];
    let mut dw = [0.0; N];
    for k in 0..N {
        let denom: f64 = (0..N).filter(|&m| m != k).map(|m| k as f64 - m as f64).product();
        w[k] = (0..N).filter(|&m| m != k).map(|m| t - m as f64).product::<f64>() / denom;
        dw[k] = (0..N)
            .filter(|&l| l != k)
            .map(|l| (0..N).filter(|&m| m != k && m != l).map(|m| t - m as f64).product::<f64>())
            .sum::<f64>()
            / denom;
    }
    (w, dw)
}

/// Bicubic (4x4 Lagrange) interpolation with analytic derivatives of the
/// local patch. Near the edges the stencil is shifted inward. Grids with
/// fewer than four nodes in a direction fall back to bilinear.
pub fn bicubic_sample(field: &ComplexField, p: Complex64) -> Result<Jet> {
    lagrange_sample::<4>(field, p)
}

/// Tensor Lagrange interpolation on an `N x N` patch (`N` even) centred on
/// the cell containing `p`, shifted inward near the edges. Higher orders
/// shrink the derivative jumps between neighbouring patches. Grids with
/// fewer than `N` nodes in a direction fall back to bilinear.
pub fn lagrange_sample<const N: usize>(field: &ComplexField, p: Complex64) -> Result<Jet> {
    let g = field.grid();
    if !g.contains(p) {
        return Err(LabError::OutOfDomain { re: p.re, im: p.im });
    }
    if g.nx < N || g.ny < N {
        let value = bilinear_sample(field, p)?;
        let (i, _) = cell_coordinate(g.x0, g.h, g.nx, p.re);
        let (j, _) = cell_coordinate(g.y0, g.h, g.ny, p.im);
        let dx = (bilinear_sample(field, Complex64::new(g.x0 + (i + 1) as f64 * g.h, p.im))?
            - bilinear_sample(field, Complex64::new(g.x0 + i as f64 * g.h, p.im))?)
            / g.h;
        let dy = (bilinear_sample(field, Complex64::new(p.re, g.y0 + (j + 1) as f64 * g.h))?
            - bilinear_sample(field, Complex64::new(p.re, g.y0 + j as f64 * g.h))?)
            / g.h;
        return Ok(Jet { value, dx, dy });
    }
    let back = (N / 2 - 1) as isize;
    let sx = ((p.re - g.x0) / g.h).clamp(0.0, (g.nx - 1) as f64);
    let sy = ((p.im - g.y0) / g.h).clamp(0.0, (g.ny - 1) as f64);
    let i0 = (sx.floor() as isize - back).clamp(0, (g.nx - N) as isize) as usize;
    let j0 = (sy.floor() as isize - back).clamp(0, (g.ny - N) as isize) as usize;
    let (wx, dwx) = lagrange_weights::<N>(sx - i0 as f64);
    let (wy, dwy) = lagrange_weights::<N>(sy - j0 as f64);
    let zero = Complex64::new(0.0, 0.0);
    let (mut value, mut dx, mut dy) = (zero, zero, zero);
    for b in 0..N {
        for a in 0..N {
            let (i, j) = (i0 + a, j0 + b);
            if !field.is_valid(i, j) {
                return Err(LabError::MaskedNode { re: p.re, im: p.im });
            }
            let v = field.at(i, j);
            value += v * (wx[a] * wy[b]);
            dx += v * (dwx[a] * wy[b]);
            dy += v * (wx[a] * dwy[b]);
        }
    }
    Ok(Jet { value, dx: dx / g.h, dy: dy / g.h })
}

/// Default admissibility threshold for conjugation: `1e-3 max|u| + 1e-6`.
pub fn default_conjugate_threshold(u: &ComplexField) -> f64 {
    1e-3 * u.map(|v| Complex64::new(v.re, 0.0)).max_abs() + 1e-6
}

/// Harmonic conjugate of the real part of `u`, normalized to vanish at
/// `basepoint`.
pub fn harmonic_conjugate(u: &ComplexField, basepoint: (usize, usize)) -> Result<ComplexField> {
    harmonic_conjugate_with(u, basepoint, default_conjugate_threshold(u))
}

/// Derivative along a line of `n` samples at position `k`: fourth-order
/// central differences with biased fourth-order stencils near the ends, so
/// the error is uniformly `O(h^4)` and leaves no seam at the edges. Lines
/// shorter than five samples use second-order formulas.
fn line_derivative(n: usize, k: usize, h: f64, at: &dyn Fn(usize) -> f64) -> f64 {
    if n < 5 {
        return if k == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * h)
        };
    }
    let d = 12.0 * h;
    match k {
        0 => (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) / d,
        1 => (-3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)) / d,
        _ if k == n - 1 => {
            (25.0 * at(n - 1) - 48.0 * at(n - 2) + 36.0 * at(n - 3) - 16.0 * at(n - 4) + 3.0 * at(n - 5)) / d
        }
        _ if k == n - 2 => {
            (3.0 * at(n - 1) + 10.0 * at(n - 2) - 18.0 * at(n - 3) + 6.0 * at(n - 4) - at(n - 5)) / d
        }
        _ => (-at(k + 2) + 8.0 * at(k + 1) - 8.0 * at(k - 1) + at(k - 2)) / d,
    }
}

/// [`harmonic_conjugate`] with an explicit harmonicity threshold.
///
/// Integrates `v_x = -u_y` along the basepoint row and then `v_y = u_x` up and
/// down each column by the trapezoidal rule, with gradients from
/// [`line_derivative`]. The valid nodes of `u` must form a rectangle; the result is
/// defined there and masked elsewhere.
pub fn harmonic_conjugate_with(u: &ComplexField, basepoint: (usize, usize), threshold: f64) -> Result<ComplexField> {
    let full = *u.grid();
    let (i0, j0, nx, ny) = u.valid_rectangle().ok_or(LabError::IrregularMask)?;
    if nx < 3 || ny < 3 {
        return Err(LabError::GridTooSmall { nx, ny });
    }
    let (bi, bj) = basepoint;
    if bi < i0 || bi >= i0 + nx || bj < j0 || bj >= j0 + ny {
        return Err(LabError::InvalidParameter("basepoint is not a valid node".into()));
    }
    let sub = u.restrict(i0, j0, nx, ny)?.map(|v| Complex64::new(v.re, 0.0));
    let residual = harmonic_residual(&sub)?;
    if residual > threshold {
        return Err(LabError::NotHarmonic { residual, threshold });
    }
    let h = full.h;
    let val = |i: usize, j: usize| sub.at(i, j).re;
    let d = |n: usize, k: usize, at: &dyn Fn(usize) -> f64| -> f64 { line_derivative(n, k, h, at) };
    let ux = |i: usize, j: usize| d(nx, i, &|k| val(k, j));
    let uy = |i: usize, j: usize| d(ny, j, &|k| val(i, k));

    let (bi, bj) = (bi - i0, bj - j0);
    let mut v = vec![0.0; nx * ny];
    let idx = |i: usize, j: usize| j * nx + i;
    for i in bi + 1..nx {
        v[idx(i, bj)] = v[idx(i - 1, bj)] - 0.5 * h * (uy(i - 1, bj) + uy(i, bj));
    }
    for i in (0..bi).rev() {
        v[idx(i, bj)] = v[idx(i + 1, bj)] + 0.5 * h * (uy(i + 1, bj) + uy(i, bj));
    }
    for i in 0..nx {
        for j in bj + 1..ny {
            v[idx(i, j)] = v[idx(i, j - 1)] + 0.5 * h * (ux(i, j - 1) + ux(i, j));
        }
        for j in (0..bj).rev() {
            v[idx(i, j)] = v[idx(i, j + 1)] - 0.5 * h * (ux(i, j + 1) + ux(i, j));
        }
    }

    let mut values = vec![Complex64::new(0.0, 0.0); full.len()];
    let mut valid = vec![false; full.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = full.index(i0 + i, j0 + j);
            values[k] = Complex64::new(v[idx(i, j)], 0.0);
            valid[k] = true;
        }
    }
    ComplexField::from_values_masked(full, values, valid)
}

/// Path antiderivative of a (nearly) holomorphic field: `F(base) = 0`,
/// `dF = Phi dz` integrated along the basepoint row and then each column by
/// the trapezoidal rule. Valid nodes must form a rectangle.
pub fn holomorphic_antiderivative(phi: &ComplexField, basepoint: (usize, usize)) -> Result<ComplexField> {
    let full = *phi.grid();
    let (i0, j0, nx, ny) = phi.valid_rectangle().ok_or(LabError::IrregularMask)?;
    let (bi, bj) = basepoint;
    if bi < i0 || bi >= i0 + nx || bj < j0 || bj >= j0 + ny {
        return Err(LabError::InvalidParameter("basepoint is not a valid node".into()));
    }
    let h = full.h;
    let at = |i: usize, j: usize| phi.at(i0 + i, j0 + j);
    let (bi, bj) = (bi - i0, bj - j0);
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; nx * ny];
    let idx = |i: usize, j: usize| j * nx + i;
    for i in bi + 1..nx {
        out[idx(i, bj)] = out[idx(i - 1, bj)] + (at(i - 1, bj) + at(i, bj)) * (0.5 * h);
    }
    for i in (0..bi).rev() {
        out[idx(i, bj)] = out[idx(i + 1, bj)] - (at(i + 1, bj) + at(i, bj)) * (0.5 * h);
    }
    let ih = I * (0.5 * h);
    for i in 0..nx {
        for j in bj + 1..ny {
            out[idx(i, j)] = out[idx(i, j - 1)] + (at(i, j - 1) + at(i, j)) * ih;
        }
        for j in (0..bj).rev() {
            out[idx(i, j)] = out[idx(i, j + 1)] - (at(i, j + 1) + at(i, j)) * ih;
        }
    }
    let mut values = vec![zero; full.len()];
    let mut valid = vec![false; full.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = full.index(i0 + i, j0 + j);
            values[k] = out[idx(i, j)];
            valid[k] = true;
        }
    }
    ComplexField::from_values_masked(full, values, valid)
}
