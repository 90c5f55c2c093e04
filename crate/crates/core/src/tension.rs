//! Tension residual `T[f] = f_{z zbar} + lambda(f) f_z f_zbar` and a Dirichlet
//! solver for `T[f] = 0`.
//!
//! The solver is a damped nonlinear Gauss-Seidel relaxation. The nonlinear
//! term is lagged from the current iterate, so each node update is explicit:
//!
//! ```text
//! f[i,j] <- f[i,j] + theta * (avg(neighbours) + h^2 lambda(f) f_z f_zbar - f[i,j])
//! ```
//!
//! On grids with `2^k` cells per side the sweeps are used as the smoother of
//! a full-approximation-scheme V-cycle, which keeps the sweep count
//! independent of `h`. Convergence is always judged on the true tension
//! residual of the finest grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{laplacian, wirtinger_z, wirtinger_zbar, ComplexField, GridSpec};
use crate::metric::{builtin_metric, Metric};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    /// Relative residual target: stop once `max|T| <= tol (1 + max|f|)`.
    pub tol: f64,
    /// Cap on fine-grid Gauss-Seidel sweeps.
    pub max_iters: usize,
    /// Damping `theta` in `(0, 1]`.
    pub damping: f64,
    /// Sweep stride for residual logging when multigrid is off.
    pub report_every: usize,
    /// Use the sweeps as a multigrid smoother when the grid allows it.
    pub multigrid: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 100_000, damping: 0.8, report_every: 10, multigrid: true }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(LabError::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(LabError::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iters == 0 || self.report_every == 0 {
            return Err(LabError::InvalidParameter("max_iters and report_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Fine-grid sweeps performed.
    pub iterations: usize,
    /// Max-norm of the tension residual of the returned field.
    pub final_residual: f64,
    pub converged: bool,
    /// Residual after each V-cycle (or every `report_every` sweeps).
    pub history: Vec<f64>,
}

impl SolveReport {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(LabError::DidNotConverge(Box::new(self.clone())))
        }
    }
}

/// Interior field of `f_{z zbar} + lambda(f) f_z f_zbar`; boundary masked.
pub fn tension_residual(f: &ComplexField, metric: &Metric) -> Result<ComplexField> {
    let fz = wirtinger_z(f)?;
    let fzb = wirtinger_zbar(f)?;
    let lap = laplacian(f)?;
    let g = *f.grid();
    let mut values = vec![ZERO; g.len()];
    let mut valid = vec![false; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if lap.is_valid(i, j) && fz.is_valid(i, j) {
                let lam = metric.lambda_guarded(f.at(i, j))?;
                values[k] = 0.25 * lap.at(i, j) + lam * fz.at(i, j) * fzb.at(i, j);
                valid[k] = true;
            }
        }
    }
    ComplexField::from_values_masked(g, values, valid)
}

struct Level {
    nx: usize,
    ny: usize,
    h: f64,
    f: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl Level {
    fn new(nx: usize, ny: usize, h: f64) -> Self {
        Self { nx, ny, h, f: vec![ZERO; nx * ny], rhs: vec![ZERO; nx * ny] }
    }

    /// Nonlinear operator at interior node `k`.
    fn apply_at(&self, metric: &Metric, k: usize) -> Result<Complex64> {
        let (e, w, n, s) = (self.f[k + 1], self.f[k - 1], self.f[k + self.nx], self.f[k - self.nx]);
        let inv4h = 1.0 / (4.0 * self.h);
        let fz = ((e - w) - I * (n - s)) * inv4h;
        let fzb = ((e - w) + I * (n - s)) * inv4h;
        let lam = metric.lambda_guarded(self.f[k])?;
        Ok((e + w + n + s - 4.0 * self.f[k]) * (0.25 / (self.h * self.h)) + lam * fz * fzb)
    }

    fn operator(&self, metric: &Metric) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.f.len()];
        for j in 1..self.ny - 1 {
            for i in 1..self.nx - 1 {
                let k = j * self.nx + i;
                out[k] = self.apply_at(metric, k)?;
            }
        }
        Ok(out)
    }

    /// Max |N(f) - rhs| over the interior.
    fn residual_norm(&self, metric: &Metric) -> Result<f64> {
        let op = self.operator(metric)?;
        let mut m: f64 = 0.0;
        for j in 1..self.ny - 1 {
            for i in 1..self.nx - 1 {
                let k = j * self.nx + i;
                m = m.max((op[k] - self.rhs[k]).norm());
            }
        }
        Ok(m)
    }

    fn max_abs(&self) -> f64 {
        self.f.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// One lexicographic damped Gauss-Seidel sweep.
    fn sweep(&mut self, metric: &Metric, theta: f64) -> Result<()> {
        let nx = self.nx;
        let h2 = self.h * self.h;
        let inv4h = 1.0 / (4.0 * self.h);
        for j in 1..self.ny - 1 {
            for i in 1..nx - 1 {
                let k = j * nx + i;
                let (e, w, n, s) = (self.f[k + 1], self.f[k - 1], self.f[k + nx], self.f[k - nx]);
                let fz = ((e - w) - I * (n - s)) * inv4h;
                let fzb = ((e - w) + I * (n - s)) * inv4h;
                let lam = metric.lambda_guarded(self.f[k])?;
                let target = (e + w + n + s) * 0.25 + h2 * (lam * fz * fzb - self.rhs[k]);
                let old = self.f[k];
                self.f[k] = old + theta * (target - old);
            }
        }
        Ok(())
    }

    fn coarsenable(&self) -> bool {
        (self.nx - 1) % 2 == 0 && (self.ny - 1) % 2 == 0 && self.nx >= 5 && self.ny >= 5
    }
}

fn build_levels(grid: &GridSpec, multigrid: bool) -> Vec<Level> {
    let mut levels = vec![Level::new(grid.nx, grid.ny, grid.h)];
    if multigrid {
        while levels.last().is_some_and(Level::coarsenable) {
            let l = levels.last().expect("non-empty");
            let next = Level::new((l.nx - 1) / 2 + 1, (l.ny - 1) / 2 + 1, l.h * 2.0);
            levels.push(next);
        }
    }
    levels
}

const PRE_SWEEPS: usize = 2;
const POST_SWEEPS: usize = 2;
const COARSEST_SWEEPS: usize = 400;

fn v_cycle(levels: &mut [Level], metric: &Metric, theta: f64) -> Result<()> {
    let (fine, rest) = levels.split_first_mut().expect("at least one level");
    let Some(coarse) = rest.first_mut() else {
        for _ in 0..COARSEST_SWEEPS {
            fine.sweep(metric, theta)?;
        }
        return Ok(());
    };
    for _ in 0..PRE_SWEEPS {
        fine.sweep(metric, theta)?;
    }
    let op = fine.operator(metric)?;
    let (nxf, nxc) = (fine.nx, coarse.nx);
    for jc in 0..coarse.ny {
        for ic in 0..nxc {
            coarse.f[jc * nxc + ic] = fine.f[2 * jc * nxf + 2 * ic];
        }
    }
    let residual = |i: usize, j: usize| -> Complex64 {
        if i == 0 || j == 0 || i + 1 == fine.nx || j + 1 == fine.ny {
            ZERO
        } else {
            let k = j * nxf + i;
            fine.rhs[k] - op[k]
        }
    };
    let coarse_op = coarse.operator(metric)?;
    coarse.rhs.iter_mut().for_each(|v| *v = ZERO);
    for jc in 1..coarse.ny - 1 {
        for ic in 1..nxc - 1 {
            let (i, j) = (2 * ic, 2 * jc);
            let r = residual(i, j) * 4.0
                + (residual(i + 1, j) + residual(i - 1, j) + residual(i, j + 1) + residual(i, j - 1)) * 2.0
                + residual(i + 1, j + 1)
                + residual(i - 1, j + 1)
                + residual(i + 1, j - 1)
                + residual(i - 1, j - 1);
            let k = jc * nxc + ic;
            coarse.rhs[k] = coarse_op[k] + r / 16.0;
        }
    }
    let start = coarse.f.clone();
    v_cycle(rest, metric, theta)?;
    let coarse = &rest[0];
    let corr: Vec<Complex64> = coarse.f.iter().zip(&start).map(|(a, b)| a - b).collect();
    for j in 1..fine.ny - 1 {
        for i in 1..nxf - 1 {
            let (ic, jc) = (i / 2, j / 2);
            let at = |a: usize, b: usize| corr[b * nxc + a];
            let e = match (i % 2, j % 2) {
                (0, 0) => at(ic, jc),
                (1, 0) => (at(ic, jc) + at(ic + 1, jc)) * 0.5,
                (0, 1) => (at(ic, jc) + at(ic, jc + 1)) * 0.5,
                _ => (at(ic, jc) + at(ic + 1, jc) + at(ic, jc + 1) + at(ic + 1, jc + 1)) * 0.25,
            };
            fine.f[j * nxf + i] += e;
        }
    }
    for _ in 0..POST_SWEEPS {
        fine.sweep(metric, theta)?;
    }
    Ok(())
}

/// Runs cycles (or plain sweeps) on `levels[0]` until the relative residual
/// target or the sweep cap is reached.
fn relax(levels: &mut [Level], metric: &Metric, params: &SolveParams) -> Result<SolveReport> {
    let mut history = Vec::new();
    let mut sweeps = 0;
    let target = |l: &Level| params.tol * (1.0 + l.max_abs());
    let mut residual = levels[0].residual_norm(metric)?;
    history.push(residual);
    let use_cycles = levels.len() > 1;
    let per_step = if use_cycles { PRE_SWEEPS + POST_SWEEPS } else { params.report_every };
    while residual > target(&levels[0]) && sweeps + per_step <= params.max_iters {
        if use_cycles {
            v_cycle(levels, metric, params.damping)?;
        } else {
            for _ in 0..per_step {
                levels[0].sweep(metric, params.damping)?;
            }
        }
        sweeps += per_step;
        residual = levels[0].residual_norm(metric)?;
        history.push(residual);
        if !residual.is_finite() {
            break;
        }
    }
    let converged = residual <= target(&levels[0]);
    Ok(SolveReport { iterations: sweeps, final_residual: residual, converged, history })
}

/// Transfinite (Coons) interpolation of the boundary values into the interior.
fn coons_fill(level: &mut Level) {
    let (nx, ny) = (level.nx, level.ny);
    let f = &mut level.f;
    let at = |f: &Vec<Complex64>, i: usize, j: usize| f[j * nx + i];
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let s = i as f64 / (nx - 1) as f64;
            let t = j as f64 / (ny - 1) as f64;
            let v = (1.0 - s) * at(f, 0, j) + s * at(f, nx - 1, j) + (1.0 - t) * at(f, i, 0) + t * at(f, i, ny - 1)
                - (1.0 - s) * (1.0 - t) * at(f, 0, 0)
                - s * (1.0 - t) * at(f, nx - 1, 0)
                - (1.0 - s) * t * at(f, 0, ny - 1)
                - s * t * at(f, nx - 1, ny - 1);
            f[j * nx + i] = v;
        }
    }
}

/// Solves `T[f] = 0` in the interior of `grid` with `f` fixed to the edge
/// nodes of `boundary` (interior values of `boundary` are ignored).
///
/// The initial guess is the discrete harmonic extension of the boundary data.
/// A run that hits `max_iters` returns the last iterate with
/// `converged = false`.
pub fn solve_dirichlet(
    boundary: &ComplexField,
    metric: &Metric,
    grid: &GridSpec,
    params: &SolveParams,
) -> Result<(ComplexField, SolveReport)> {
    params.validate()?;
    if grid.nx < 3 || grid.ny < 3 {
        return Err(LabError::GridTooSmall { nx: grid.nx, ny: grid.ny });
    }
    if !boundary.grid().matches(grid) {
        return Err(LabError::GridMismatch);
    }
    let mut levels = build_levels(grid, params.multigrid);
    let fine = &mut levels[0];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if !grid.is_interior(i, j) {
                if !boundary.is_valid(i, j) {
                    return Err(LabError::InvalidParameter(format!("boundary value at node ({i}, {j}) is masked")));
                }
                fine.f[grid.index(i, j)] = boundary.at(i, j);
            }
        }
    }
    coons_fill(fine);

    let euclid = builtin_metric("euclid")?;
    let harmonic = SolveParams { tol: params.tol.max(1e-9), max_iters: params.max_iters, ..*params };
    relax(&mut levels, &euclid, &harmonic)?;

    let report = relax(&mut levels, metric, params)?;
    let field = ComplexField::from_values(*grid, levels.swap_remove(0).f)?;
    Ok((field, report))
}
