//! Linear Beltrami solves, map inversion, and the residuals of the nonlinear
//! Beltrami equation satisfied by inverses of harmonic maps.
//!
//! Two sign conventions are supported for the inverse-map equation:
//!
//! ```text
//! Printed:  R = mu_w - conj(mu) mu_wbar - mu (lambda + conj(mu) conj(lambda)),  nu = e^{+iv} conj(mu)
//! Harmonic: R = mu_w - conj(mu) mu_wbar + mu (lambda + conj(mu) conj(lambda)),  nu = e^{-iv} conj(mu)
//! ```
//!
//! `Harmonic` is the equation actually satisfied by `mu_{f^{-1}}` when `f`
//! solves the tension equation; `Printed` is the same equation with `lambda`
//! replaced by `-lambda`. For a flat metric the entire solutions are
//! `alpha e^{+iv}` (printed) and `alpha e^{-iv}` (harmonic).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{lagrange_sample, wirtinger_z, wirtinger_zbar, ComplexField, GridSpec, Jet};
use crate::metric::{FlatMetric, Metric};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest accepted ellipticity bound.
pub const MAX_ELLIPTICITY: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Printed,
    Harmonic,
}

impl Convention {
    /// Sign `s` in `R = ... - s mu (lambda + conj(mu) conj(lambda))` and in
    /// the twist `e^{s i v}`; also the sign of the entire coefficient
    /// `alpha e^{s i v}`.
    pub fn sign(self) -> f64 {
        match self {
            Convention::Printed => 1.0,
            Convention::Harmonic => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeltramiProblem {
    mu: ComplexField,
    normalization: [(Complex64, Complex64); 2],
    k: f64,
}

impl BeltramiProblem {
    /// Problem with the default normalization `0 -> 0`, `1 -> 1`.
    pub fn new(mu: ComplexField) -> Result<Self> {
        Self::with_normalization(mu, [(ZERO, ZERO), (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))])
    }

    pub fn with_normalization(mu: ComplexField, normalization: [(Complex64, Complex64); 2]) -> Result<Self> {
        let g = mu.grid();
        let mut k: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if !mu.is_valid(i, j) {
                    return Err(LabError::InvalidParameter(format!("mu is masked at node ({i}, {j})")));
                }
                if g.is_interior(i, j) {
                    k = k.max(mu.at(i, j).norm());
                }
            }
        }
        if !(k < MAX_ELLIPTICITY) {
            return Err(LabError::Ellipticity(k));
        }
        let [(p0, q0), (p1, q1)] = normalization;
        if p0 == p1 || q0 == q1 {
            return Err(LabError::InvalidParameter("normalization needs two distinct points and values".into()));
        }
        Ok(Self { mu, normalization, k })
    }

    pub fn mu(&self) -> &ComplexField {
        &self.mu
    }

    pub fn normalization(&self) -> [(Complex64, Complex64); 2] {
        self.normalization
    }

    /// Sup of `|mu|` over interior nodes.
    pub fn k(&self) -> f64 {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsParams {
    /// `tau` in the smoothing weight `eps = tau h^2` on second differences.
    /// Zero gives the exact box solution, which carries odd-even noise.
    pub regularization: f64,
    /// Stop once the cell residual `max|g_wbar - mu g_w| <= tol max|g_w|`.
    pub tol: f64,
    /// Relative residual for each inner conjugate-gradient solve.
    pub cg_tol: f64,
    /// Multiplier rounds; each one drives the cell residual further toward
    /// zero at the price of less smoothing.
    pub max_rounds: usize,
}

impl Default for LsParams {
    fn default() -> Self {
        Self { regularization: 1e-3, tol: 1e-6, cg_tol: 1e-10, max_rounds: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsReport {
    pub cg_iterations: usize,
    pub rounds: usize,
    /// `max|g_wbar - mu g_w| / max|g_w|` over cells (box differences).
    pub relative_residual: f64,
}

/// Bilinear interpolation weights of the point `p`.
fn point_weights(grid: &GridSpec, p: Complex64) -> Result<Vec<(usize, f64)>> {
    if !grid.contains(p) {
        return Err(LabError::ConstraintOutsideGrid { re: p.re, im: p.im });
    }
    let cell = |origin: f64, n: usize, x: f64| {
        let s = ((x - origin) / grid.h).clamp(0.0, (n - 1) as f64);
        let c = (s.floor() as usize).min(n - 2);
        (c, s - c as f64)
    };
    let (i, tx) = cell(grid.x0, grid.nx, p.re);
    let (j, ty) = cell(grid.y0, grid.ny, p.im);
    let mut w = vec![
        (grid.index(i, j), (1.0 - tx) * (1.0 - ty)),
        (grid.index(i + 1, j), tx * (1.0 - ty)),
        (grid.index(i, j + 1), (1.0 - tx) * ty),
        (grid.index(i + 1, j + 1), tx * ty),
    ];
    w.retain(|&(_, c)| c != 0.0);
    Ok(w)
}

fn functional(weights: &[(usize, f64)], g: &[Complex64]) -> Complex64 {
    weights.iter().map(|&(k, c)| g[k] * c).sum()
}

/// Regularized normal operator `B*B + eps (Dxx*Dxx + Dyy*Dyy + 2 Dxy*Dxy)`
/// restricted to corrections whose real part vanishes on the boundary.
///
/// `B` is the box (cell-centred) Beltrami operator: on the cell with lower
/// left corner `k`, `r = c[0] g_00 + c[1] g_10 + c[2] g_01 + c[3] g_11`.
struct NormalOperator {
    nx: usize,
    ny: usize,
    h: f64,
    cells: Vec<[Complex64; 4]>,
    eps: f64,
}

impl NormalOperator {
    fn new(mu: &ComplexField, eps: f64) -> Self {
        let g = *mu.grid();
        let (nx, ny, h) = (g.nx, g.ny, g.h);
        let mut cells = vec![[ZERO; 4]; nx * ny];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let m = (mu.at(i, j) + mu.at(i + 1, j) + mu.at(i, j + 1) + mu.at(i + 1, j + 1)) * 0.25;
                // g_wbar - mu g_w = p g_x + q g_y
                let p = (1.0 - m) / (4.0 * h);
                let q = I * (1.0 + m) / (4.0 * h);
                cells[j * nx + i] = [-p - q, p - q, q - p, p + q];
            }
        }
        Self { nx, ny, h, cells, eps }
    }

    fn interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }

    fn apply_b(&self, g: &[Complex64], r: &mut [Complex64]) {
        let nx = self.nx;
        for j in 0..self.ny - 1 {
            for i in 0..nx - 1 {
                let k = j * nx + i;
                let c = &self.cells[k];
                r[k] = c[0] * g[k] + c[1] * g[k + 1] + c[2] * g[k + nx] + c[3] * g[k + nx + 1];
            }
        }
    }

    fn add_b_adjoint(&self, r: &[Complex64], out: &mut [Complex64]) {
        let nx = self.nx;
        for j in 0..self.ny - 1 {
            for i in 0..nx - 1 {
                let k = j * nx + i;
                let c = &self.cells[k];
                out[k] += c[0].conj() * r[k];
                out[k + 1] += c[1].conj() * r[k];
                out[k + nx] += c[2].conj() * r[k];
                out[k + nx + 1] += c[3].conj() * r[k];
            }
        }
    }

    /// Full (unprojected) operator.
    fn apply_full(&self, g: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let (nx, ny) = (self.nx, self.ny);
        out.iter_mut().for_each(|v| *v = ZERO);
        self.apply_b(g, scratch);
        self.add_b_adjoint(scratch, out);
        let c = self.eps / self.h.powi(4);
        for j in 0..ny {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                let t = (g[k + 1] - g[k] * 2.0 + g[k - 1]) * c;
                out[k + 1] += t;
                out[k - 1] += t;
                out[k] -= t * 2.0;
            }
        }
        for j in 1..ny - 1 {
            for i in 0..nx {
                let k = j * nx + i;
                let t = (g[k + nx] - g[k] * 2.0 + g[k - nx]) * c;
                out[k + nx] += t;
                out[k - nx] += t;
                out[k] -= t * 2.0;
            }
        }
        let cxy = c / 8.0;
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                let t = (g[k + nx + 1] - g[k - nx + 1] - g[k + nx - 1] + g[k - nx - 1]) * cxy;
                out[k + nx + 1] += t;
                out[k - nx + 1] -= t;
                out[k + nx - 1] -= t;
                out[k - nx - 1] += t;
            }
        }
    }

    /// Drops the real part on boundary nodes.
    fn project(&self, v: &mut [Complex64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                if !self.interior(i, j) {
                    v[j * nx + i].re = 0.0;
                }
            }
        }
    }

    fn apply(&self, g: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        self.apply_full(g, out, scratch);
        self.project(out);
    }

    fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let c = self.eps / self.h.powi(4);
        let xin = |i: usize| i > 0 && i + 1 < nx;
        let yin = |j: usize| j > 0 && j + 1 < ny;
        let mut d = vec![0.0; nx * ny];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let k = j * nx + i;
                let cell = &self.cells[k];
                d[k] += cell[0].norm_sqr();
                d[k + 1] += cell[1].norm_sqr();
                d[k + nx] += cell[2].norm_sqr();
                d[k + nx + 1] += cell[3].norm_sqr();
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let mut cx = if xin(i) { 4.0 } else { 0.0 };
                cx += [i.wrapping_sub(1), i + 1].iter().filter(|&&q| q < nx && xin(q)).count() as f64;
                let mut cy = if yin(j) { 4.0 } else { 0.0 };
                cy += [j.wrapping_sub(1), j + 1].iter().filter(|&&q| q < ny && yin(q)).count() as f64;
                let mut cxy = 0.0;
                for (di, dj) in [(-1i64, -1i64), (-1, 1), (1, -1), (1, 1)] {
                    let (p, q) = (i as i64 + di, j as i64 + dj);
                    if p >= 0 && q >= 0 && self.interior(p as usize, q as usize) {
                        cxy += 2.0 / 16.0;
                    }
                }
                d[j * nx + i] += c * (cx + cy + cxy);
            }
        }
        d
    }
}

fn dot_re(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

fn norm(x: &[Complex64]) -> f64 {
    dot_re(x, x).sqrt()
}

/// Jacobi-preconditioned conjugate gradient for the projected operator,
/// which is symmetric positive semidefinite for the real inner product
/// `Re <x, y>`. Returns `(iterations, relative residual)`.
fn pcg(
    op: &NormalOperator,
    diag: &[f64],
    rhs: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iters: usize,
) -> (usize, f64) {
    let n = rhs.len();
    let mut scratch = vec![ZERO; n];
    let mut ax = vec![ZERO; n];
    op.apply(x, &mut ax, &mut scratch);
    let mut r: Vec<Complex64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = norm(rhs).max(f64::MIN_POSITIVE);
    let mut rel = norm(&r) / bnorm;
    if rel <= tol {
        return (0, rel);
    }
    let mut z: Vec<Complex64> = r.iter().zip(diag).map(|(v, d)| v / d).collect();
    let mut p = z.clone();
    let mut rz = dot_re(&r, &z);
    let mut ap = vec![ZERO; n];
    for it in 1..=max_iters {
        op.apply(&p, &mut ap, &mut scratch);
        let pap = dot_re(&p, &ap);
        if !(pap > 0.0) {
            return (it, rel);
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += p[k] * alpha;
            r[k] -= ap[k] * alpha;
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            return (it, rel);
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot_re(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + p[k] * beta;
        }
    }
    (max_iters, rel)
}

/// Least-squares solution of `g_wbar = mu g_w` with the default parameters.
pub fn solve_beltrami_ls(problem: &BeltramiProblem, grid: &GridSpec) -> Result<ComplexField> {
    solve_beltrami_ls_with(problem, grid, &LsParams::default()).map(|(g, _)| g)
}

/// Least-squares Beltrami solve.
///
/// Minimizes `|B g|^2 + eps |C g|^2` where `B g = g_wbar - mu g_w` is taken
/// on the cells of the grid (box differences, `mu` averaged over the cell
/// corners) and `C` collects the second differences, with `Re g = Re w` held
/// on the boundary. The boundary condition removes the freedom of
/// post-composing with holomorphic maps and leaves a nearly square system;
/// the small smoothing term removes the one odd-even mode the box stencil
/// does not see. Affine maps satisfy both exactly, so constant coefficients
/// are reproduced to rounding. A few rounds of multiplier updates on `B g = 0`
/// remove the bias of the smoothing term. The result is finally normalized
/// by a target affine map so that the two point constraints hold exactly,
/// which leaves `g_wbar / g_w` unchanged.
pub fn solve_beltrami_ls_with(
    problem: &BeltramiProblem,
    grid: &GridSpec,
    params: &LsParams,
) -> Result<(ComplexField, LsReport)> {
    if !(params.regularization >= 0.0 && params.tol > 0.0 && params.cg_tol > 0.0) || params.max_rounds == 0 {
        return Err(LabError::InvalidParameter("least-squares parameters must be positive".into()));
    }
    if grid.nx < 3 || grid.ny < 3 {
        return Err(LabError::GridTooSmall { nx: grid.nx, ny: grid.ny });
    }
    if !problem.mu.grid().matches(grid) {
        return Err(LabError::GridMismatch);
    }
    let [(p0, q0), (p1, q1)] = problem.normalization;
    let l0 = point_weights(grid, p0)?;
    let l1 = point_weights(grid, p1)?;

    let n = grid.len();
    let h = grid.h;
    let op = NormalOperator::new(&problem.mu, params.regularization * h * h);
    let diag = op.diagonal();
    let cap = 10 * n;

    // g = id + d with Re d = 0 on the boundary. Each round minimizes
    // |B g + y|^2 + eps |C g|^2 over d, then y += B g.
    let base: Vec<Complex64> = (0..n).map(|k| grid.node(k % grid.nx, k / grid.nx)).collect();
    let mut d = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    let mut g = base.clone();
    let mut bg = vec![ZERO; n];
    let mut rhs = vec![ZERO; n];
    let mut scratch = vec![ZERO; n];
    let mut total = 0;
    let mut rounds = 0;
    let mut relative = f64::INFINITY;
    while rounds < params.max_rounds {
        rounds += 1;
        // rhs = -P (A base + B* y); A base only sees the smoothing term
        // through boundary effects and B base = mu-dependent.
        op.apply_full(&base, &mut rhs, &mut scratch);
        op.add_b_adjoint(&y, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        op.project(&mut rhs);
        let (its, res) = pcg(&op, &diag, &rhs, &mut d, params.cg_tol, cap.saturating_sub(total).max(1));
        total += its;
        if res > params.cg_tol && total >= cap {
            return Err(LabError::CgStagnation { iterations: total, residual: res });
        }
        for k in 0..n {
            g[k] = base[k] + d[k];
        }
        op.apply_b(&g, &mut bg);
        let gw = max_box_gw(&g, grid);
        relative = bg.iter().map(|v| v.norm()).fold(0.0, f64::max) / gw.max(f64::MIN_POSITIVE);
        if relative <= params.tol {
            break;
        }
        for k in 0..n {
            y[k] += bg[k];
        }
    }

    // Exact normalization by a target affine map.
    let v0 = functional(&l0, &g);
    let v1 = functional(&l1, &g);
    let scale = v1 - v0;
    if scale.norm() == 0.0 || !scale.is_finite() {
        return Err(LabError::Degenerate("least-squares solution does not separate the constraint points".into()));
    }
    let values: Vec<Complex64> = g.iter().map(|v| q0 + (q1 - q0) * (v - v0) / scale).collect();
    let field = ComplexField::from_values(*grid, values)?;
    Ok((field, LsReport { cg_iterations: total, rounds, relative_residual: relative }))
}

fn max_box_gw(g: &[Complex64], grid: &GridSpec) -> f64 {
    let nx = grid.nx;
    let mut best: f64 = 0.0;
    for j in 0..grid.ny - 1 {
        for i in 0..nx - 1 {
            let k = j * nx + i;
            let dx = g[k + 1] - g[k] + g[k + nx + 1] - g[k + nx];
            let dy = g[k + nx] - g[k] + g[k + nx + 1] - g[k + 1];
            best = best.max(((dx - I * dy) / (4.0 * grid.h)).norm());
        }
    }
    best
}

/// `g_wbar - mu g_w` at interior nodes.
pub fn beltrami_residual(g: &ComplexField, mu: &ComplexField) -> Result<ComplexField> {
    let gz = wirtinger_z(g)?;
    let gzb = wirtinger_zbar(g)?;
    let prod = gz.zip_map(mu, |a, m| m * a)?;
    gzb.zip_map(&prod, |a, b| a - b)
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.max(1)).min(16)
}

/// Maps `op` over `items` on scoped threads, preserving order.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], op: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = worker_count(items.len() / 64);
    if workers <= 1 {
        return items.iter().map(&op).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|part| s.spawn(|| part.iter().map(&op).collect::<Vec<U>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Nearest-sample lookup over the image points of a map.
struct ImageIndex {
    origin: Complex64,
    cell: f64,
    nbx: usize,
    nby: usize,
    buckets: Vec<Vec<(usize, usize)>>,
}

impl ImageIndex {
    fn new(f: &ComplexField) -> Option<Self> {
        let pts: Vec<(usize, usize, Complex64)> = f.iter_valid().collect();
        if pts.is_empty() {
            return None;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(_, _, v) in &pts {
            x0 = x0.min(v.re);
            x1 = x1.max(v.re);
            y0 = y0.min(v.im);
            y1 = y1.max(v.im);
        }
        let extent = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
        let per_side = (pts.len() as f64).sqrt().ceil().max(1.0);
        let cell = extent / per_side;
        let nbx = ((x1 - x0) / cell).floor() as usize + 1;
        let nby = ((y1 - y0) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nbx * nby];
        let origin = Complex64::new(x0, y0);
        for &(i, j, v) in &pts {
            let bx = (((v.re - x0) / cell) as usize).min(nbx - 1);
            let by = (((v.im - y0) / cell) as usize).min(nby - 1);
            buckets[by * nbx + bx].push((i, j));
        }
        Some(Self { origin, cell, nbx, nby, buckets })
    }

    fn nearest(&self, f: &ComplexField, w: Complex64) -> Option<((usize, usize), f64)> {
        let bx = ((w.re - self.origin.re) / self.cell).floor() as i64;
        let by = ((w.im - self.origin.im) / self.cell).floor() as i64;
        let mut best: Option<((usize, usize), f64)> = None;
        let max_ring = self.nbx.max(self.nby) as i64 + bx.abs().max(by.abs());
        for ring in 0..=max_ring {
            if let Some((_, d)) = best {
                if d < (ring as f64 - 1.0) * self.cell {
                    break;
                }
            }
            for qy in (by - ring)..=(by + ring) {
                for qx in (bx - ring)..=(bx + ring) {
                    if (qx - bx).abs() != ring && (qy - by).abs() != ring {
                        continue;
                    }
                    if qx < 0 || qy < 0 || qx >= self.nbx as i64 || qy >= self.nby as i64 {
                        continue;
                    }
                    for &(i, j) in &self.buckets[qy as usize * self.nbx + qx as usize] {
                        let d = (f.at(i, j) - w).norm();
                        if best.is_none_or(|(_, b)| d < b) {
                            best = Some(((i, j), d));
                        }
                    }
                }
            }
        }
        best
    }
}

enum Inversion {
    Found(Complex64),
    Outside,
    Failed,
}

/// Newton iteration for `f(z) = w` on the sixth-order Lagrange interpolant of `f`.
fn newton_invert(f: &ComplexField, w: Complex64, seed: Complex64, tol: f64) -> Inversion {
    let g = f.grid();
    let clamp = |z: Complex64| Complex64::new(z.re.clamp(g.x0, g.x1()), z.im.clamp(g.y0, g.y1()));
    let mut z = seed;
    // Targets whose interpolation stencil touches a masked sample cannot be
    // resolved and are treated as outside the image.
    let Ok(mut jet) = lagrange_sample::<6>(f, z) else { return Inversion::Outside };
    let mut err = (jet.value - w).norm();
    let mut pinned = 0;
    for _ in 0..60 {
        if err <= tol {
            return Inversion::Found(z);
        }
        let (a, b, c, d) = (jet.dx.re, jet.dy.re, jet.dx.im, jet.dy.im);
        let det = a * d - b * c;
        if !(det > 0.0) {
            return Inversion::Failed;
        }
        let r = jet.value - w;
        let step = Complex64::new(-(d * r.re - b * r.im) / det, -(-c * r.re + a * r.im) / det);
        let mut t = 1.0;
        let mut accepted = false;
        let mut masked = false;
        for _ in 0..30 {
            let trial = z + step * t;
            let cand = clamp(trial);
            match lagrange_sample::<6>(f, cand) {
                Ok(j) => {
                    let e = (j.value - w).norm();
                    if e < err || e <= tol {
                        pinned = if cand != trial { pinned + 1 } else { 0 };
                        z = cand;
                        jet = j;
                        err = e;
                        accepted = true;
                        break;
                    }
                }
                Err(LabError::MaskedNode { .. }) => masked = true,
                Err(_) => {}
            }
            t *= 0.5;
        }
        if !accepted || pinned >= 3 {
            return if pinned > 0 || masked || on_edge(g, z) { Inversion::Outside } else { Inversion::Failed };
        }
    }
    if err <= tol {
        Inversion::Found(z)
    } else if on_edge(g, z) {
        Inversion::Outside
    } else {
        Inversion::Failed
    }
}

fn on_edge(g: &GridSpec, z: Complex64) -> bool {
    let eps = 1e-9 * g.h;
    z.re <= g.x0 + eps || z.re >= g.x1() - eps || z.im <= g.y0 + eps || z.im >= g.y1() - eps
}

/// Newton tolerance relative to the diameter of the image.
const INVERT_TOL: f64 = 1e-12;

/// Solves `f(z) = w` for each point. `None` marks points outside the image
/// of `f` (or next to masked samples).
pub fn invert_points(f: &ComplexField, points: &[Complex64]) -> Result<Vec<Option<Complex64>>> {
    let grid = f.grid();
    let fz = wirtinger_z(f)?;
    let fzb = wirtinger_zbar(f)?;
    for (i, j, a) in fz.iter_valid() {
        if let Some(b) = fzb.get(i, j) {
            let jac = a.norm_sqr() - b.norm_sqr();
            if !(jac > 0.0) {
                let p = grid.node(i, j);
                return Err(LabError::DegenerateJacobian(format!(
                    "|f_z|^2 - |f_zbar|^2 = {jac:.3e} at ({}, {})",
                    p.re, p.im
                )));
            }
        }
    }
    let Some(index) = ImageIndex::new(f) else { return Err(LabError::AllDegenerate) };
    let diam = index.cell * (index.nbx.max(index.nby) as f64) * std::f64::consts::SQRT_2;
    let tol = INVERT_TOL * diam.max(1.0);

    let outcomes = par_map(points, |&w| {
        let Some(((i, j), dist)) = index.nearest(f, w) else { return (Inversion::Outside, false) };
        // Local sample spacing around the seed.
        let mut spacing: f64 = 0.0;
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (p, q) = (i as i64 + di, j as i64 + dj);
            if p >= 0 && q >= 0 {
                if let Some(v) = f.get(p as usize, q as usize) {
                    spacing = spacing.max((v - f.at(i, j)).norm());
                }
            }
        }
        // Covered: the seed sits inside a fully valid 5x5 block.
        let deep = (-2i64..=2).all(|dj| {
            (-2i64..=2).all(|di| {
                let (p, q) = (i as i64 + di, j as i64 + dj);
                p >= 0 && q >= 0 && f.get(p as usize, q as usize).is_some()
            })
        });
        let covered = deep && dist <= spacing;
        (newton_invert(f, w, grid.node(i, j), tol), covered)
    });
    let mut failed = 0;
    let mut covered = 0;
    let mut out = Vec::with_capacity(points.len());
    for (res, cov) in outcomes {
        if cov {
            covered += 1;
        }
        match res {
            Inversion::Found(z) => out.push(Some(z)),
            Inversion::Failed => {
                if cov {
                    failed += 1;
                }
                out.push(None)
            }
            Inversion::Outside => out.push(None),
        }
    }
    if covered > 0 && failed * 10 > covered {
        return Err(LabError::NotInjectiveSeed { failed, covered });
    }
    Ok(out)
}

/// Samples `f^{-1}` at the nodes of `targets`; nodes outside the image of
/// `f` are masked. Uses Newton on a 6x6 Lagrange interpolant of `f`, seeded
/// from the nearest sample.
pub fn invert_map(f: &ComplexField, targets: &GridSpec) -> Result<ComplexField> {
    let points: Vec<Complex64> = (0..targets.len()).map(|k| targets.node(k % targets.nx, k / targets.nx)).collect();
    let found = invert_points(f, &points)?;
    let valid: Vec<bool> = found.iter().map(Option::is_some).collect();
    let values: Vec<Complex64> = found.into_iter().map(|z| z.unwrap_or(ZERO)).collect();
    ComplexField::from_values_masked(*targets, values, valid)
}

/// Pointwise inverse-equation residual from `mu`, its Wirtinger derivatives
/// and `lambda`.
pub fn inverse_residual_at(mu: Complex64, mu_w: Complex64, mu_wbar: Complex64, lambda: Complex64, convention: Convention) -> Complex64 {
    mu_w - mu.conj() * mu_wbar - convention.sign() * mu * (lambda + mu.conj() * lambda.conj())
}

/// Residual of the printed inverse-map equation with numeric derivatives.
pub fn inverse_beltrami_residual(mu: &ComplexField, metric: &Metric) -> Result<ComplexField> {
    inverse_beltrami_residual_with(mu, metric, Convention::Printed)
}

pub fn inverse_beltrami_residual_with(mu: &ComplexField, metric: &Metric, convention: Convention) -> Result<ComplexField> {
    let mw = wirtinger_z(mu)?;
    let mwb = wirtinger_zbar(mu)?;
    let grid = *mu.grid();
    let mut values = vec![ZERO; grid.len()];
    let mut valid = vec![false; grid.len()];
    for (i, j, a) in mw.iter_valid() {
        let (Some(b), Some(m)) = (mwb.get(i, j), mu.get(i, j)) else { continue };
        let k = grid.index(i, j);
        values[k] = inverse_residual_at(m, a, b, metric.lambda(grid.node(i, j)), convention);
        valid[k] = true;
    }
    ComplexField::from_values_masked(grid, values, valid)
}

/// Residual with `mu` and its partial derivatives supplied in closed form.
pub fn inverse_beltrami_residual_analytic(
    grid: &GridSpec,
    mu: impl Fn(Complex64) -> Jet,
    metric: &Metric,
    convention: Convention,
) -> ComplexField {
    ComplexField::from_fn(*grid, |w| {
        let m = mu(w);
        inverse_residual_at(m.value, m.dz(), m.dzbar(), metric.lambda(w), convention)
    })
}

/// `alpha e^{s i v}` with its derivatives, `s` the convention sign. These
/// are the entire solutions of the inverse-map equation over a flat metric.
pub fn entire_coefficient(alpha: Complex64, metric: &FlatMetric, convention: Convention) -> impl Fn(Complex64) -> Jet + '_ {
    let s = convention.sign();
    move |w| {
        let value = alpha * Complex64::from_polar(1.0, s * metric.v(w));
        let hp = metric.potential_derivative(w);
        // v = Im H: v_x = Im H', v_y = Re H'.
        Jet { value, dx: value * I * (s * hp.im), dy: value * I * (s * hp.re) }
    }
}

/// `nu = e^{iv} conj(mu)`.
pub fn nu_twist(mu: &ComplexField, metric: &Metric) -> Result<ComplexField> {
    nu_twist_with(mu, metric, Convention::Printed)
}

pub fn nu_twist_with(mu: &ComplexField, metric: &Metric, convention: Convention) -> Result<ComplexField> {
    let flat = metric.as_flat()?;
    let s = convention.sign();
    Ok(mu.map_with_node(|w, m| Complex64::from_polar(1.0, s * flat.v(w)) * m.conj()))
}

/// `max |nu_wbar - mu nu_w|` over interior nodes, numeric derivatives.
pub fn nu_quasiregular_residual(mu: &ComplexField, metric: &Metric) -> Result<f64> {
    nu_quasiregular_residual_with(mu, metric, Convention::Printed)
}

pub fn nu_quasiregular_residual_with(mu: &ComplexField, metric: &Metric, convention: Convention) -> Result<f64> {
    let nu = nu_twist_with(mu, metric, convention)?;
    let r = beltrami_residual(&nu, mu)?;
    if r.valid_count() == 0 {
        return Err(LabError::NoValidInterior);
    }
    Ok(r.max_abs())
}

/// `nu_wbar - mu nu_w` with `mu` supplied in closed form.
pub fn nu_quasiregular_residual_analytic(
    grid: &GridSpec,
    mu: impl Fn(Complex64) -> Jet,
    metric: &Metric,
    convention: Convention,
) -> Result<ComplexField> {
    let flat = metric.as_flat()?;
    let s = convention.sign();
    Ok(ComplexField::from_fn(*grid, |w| {
        let m = mu(w);
        let e = Complex64::from_polar(1.0, s * flat.v(w));
        let hp = flat.potential_derivative(w);
        let nu = e * m.value.conj();
        let nu_x = nu * I * (s * hp.im) + e * m.dx.conj();
        let nu_y = nu * I * (s * hp.re) + e * m.dy.conj();
        let jet = Jet { value: nu, dx: nu_x, dy: nu_y };
        jet.dzbar() - m.value * jet.dz()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntireFamilyMember {
    pub alpha: Complex64,
    pub metric_id: String,
    pub convention: Convention,
    /// Solution of `g_wbar = mu^g g_w` with `g(0) = 0`, `g(1) = 1`.
    pub g: ComplexField,
    /// `g^{-1}` sampled on the same grid; `f(0) = 0`, `f(1) = 1`.
    pub f: ComplexField,
}

/// Entire harmonic map with inverse coefficient `alpha e^{-iv}`.
pub fn construct_entire(alpha: Complex64, metric: &Metric, grid: &GridSpec) -> Result<EntireFamilyMember> {
    construct_entire_with(alpha, metric, grid, Convention::Harmonic, &LsParams::default())
}

/// Builds `mu^g = alpha e^{s i v}`, solves for `g`, and inverts it. The
/// two-point normalization of `g` makes `f = g^{-1}` normalized as well.
pub fn construct_entire_with(
    alpha: Complex64,
    metric: &Metric,
    grid: &GridSpec,
    convention: Convention,
    params: &LsParams,
) -> Result<EntireFamilyMember> {
    let g = entire_inverse_with(alpha, metric, grid, convention, params)?;
    let f = invert_map(&g, grid)?;
    Ok(EntireFamilyMember { alpha, metric_id: metric.id().to_string(), convention, g, f })
}

/// Only the inverse `g` of a family member (no inversion step).
pub fn entire_inverse_with(
    alpha: Complex64,
    metric: &Metric,
    grid: &GridSpec,
    convention: Convention,
    params: &LsParams,
) -> Result<ComplexField> {
    if !(alpha.norm() < 1.0) {
        return Err(LabError::AlphaOutOfDisk(alpha.norm()));
    }
    let flat = metric.as_flat()?;
    for p in [ZERO, Complex64::new(1.0, 0.0)] {
        if !grid.contains(p) {
            return Err(LabError::ConstraintOutsideGrid { re: p.re, im: p.im });
        }
    }
    let coeff = entire_coefficient(alpha, flat, convention);
    let mu = ComplexField::from_fn(*grid, |w| coeff(w).value);
    let problem = BeltramiProblem::new(mu)?;
    Ok(solve_beltrami_ls_with(&problem, grid, params)?.0)
}
