//! Per-map diagnostics: Beltrami coefficient, Hopf differential, `sigma`,
//! the harmonicity lemmas, the holomorphic `Psi`, the Euclidean companion
//! map, the maximum-principle scan and the pushforward of `mu`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::invert_map;
use crate::error::{LabError, Result};
use crate::field::{
    bilinear_sample, harmonic_conjugate_with, harmonic_residual,
    holomorphic_antiderivative, wirtinger_z, wirtinger_zbar, ComplexField, GridSpec,
};
use crate::metric::{Metric, EXP_GUARD};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Nodes with `|f_z|` below this fraction of `max |f_z|` are masked.
pub const DEGENERATE_FZ: f64 = 1e-12;
/// Nodes with `|mu|` below this are masked before taking `log |mu|` or `arg`.
pub const MU_ZERO: f64 = 1e-8;
/// Default curvature scale of the maximum-principle guard `10 h^2 scale`.
pub const DEFAULT_CURVATURE_SCALE: f64 = 1e-3;

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `f_z` and `f_zbar` with nodes of numerically vanishing `f_z` masked.
fn derivatives(f: &ComplexField) -> Result<(ComplexField, ComplexField)> {
    let fz = wirtinger_z(f)?;
    let fzb = wirtinger_zbar(f)?;
    let scale = fz.max_abs();
    if !(scale > 0.0) {
        return Err(LabError::AllDegenerate);
    }
    let fz = fz.masked_where(|_, _, v| v.norm() >= DEGENERATE_FZ * scale);
    let fzb = fzb.zip_map(&fz, |b, _| b)?;
    Ok((fz, fzb))
}

fn rho_at(metric: &Metric, w: Complex64, power: f64) -> Result<f64> {
    let lr = metric.log_rho(w);
    if !lr.is_finite() || (power * lr).abs() > EXP_GUARD {
        return Err(LabError::MetricEvaluation(lr.abs()));
    }
    Ok((power * lr).exp())
}

/// `mu = f_zbar / f_z` on interior nodes.
pub fn beltrami_coefficient(f: &ComplexField) -> Result<ComplexField> {
    let (fz, fzb) = derivatives(f)?;
    let mu = fzb.zip_map(&fz, |b, a| b / a)?;
    if mu.valid_count() == 0 {
        return Err(LabError::AllDegenerate);
    }
    Ok(mu)
}

/// `K = (1 + |mu|) / (1 - |mu|)`.
pub fn distortion(mu: Complex64) -> Result<f64> {
    let m = mu.norm();
    if !(m < 1.0) {
        return Err(LabError::Degenerate(format!("|mu| = {m} is not below 1")));
    }
    Ok((1.0 + m) / (1.0 - m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfField {
    /// `rho(f)^power f_z conj(f_zbar)`.
    pub phi: ComplexField,
    pub convention_power: f64,
}

/// Hopf differential `Phi = rho(f) f_z conj(f_zbar)`.
pub fn hopf(f: &ComplexField, metric: &Metric) -> Result<HopfField> {
    hopf_with_power(f, metric, 1.0)
}

/// Hopf differential with `rho^power`; `power = 2` is the alternative
/// normalisation, which is not holomorphic for harmonic maps under the
/// tension equation used here.
pub fn hopf_with_power(f: &ComplexField, metric: &Metric, power: f64) -> Result<HopfField> {
    let (fz, fzb) = derivatives(f)?;
    let grid = *f.grid();
    let mut out = fz.zip_map(&fzb, |a, b| a * b.conj())?;
    let mut values = out.values().to_vec();
    for (i, j, p) in out.iter_valid() {
        values[grid.index(i, j)] = p * rho_at(metric, f.at(i, j), power)?;
    }
    out = ComplexField::from_values_masked(grid, values, out.validity().to_vec())?;
    Ok(HopfField { phi: out, convention_power: power })
}

/// `max |d Phi / d zbar|` over interior nodes.
pub fn holomorphy_residual(phi: &ComplexField) -> Result<f64> {
    let d = wirtinger_zbar(phi)?;
    if d.valid_count() == 0 {
        return Err(LabError::NoValidInterior);
    }
    Ok(d.max_abs())
}

/// `sigma^2 = rho(f) |f_z|^2` as a real field.
pub fn sigma_field(f: &ComplexField, metric: &Metric) -> Result<ComplexField> {
    let (fz, _) = derivatives(f)?;
    let grid = *f.grid();
    let mut values = vec![ZERO; grid.len()];
    for (i, j, a) in fz.iter_valid() {
        values[grid.index(i, j)] = real(rho_at(metric, f.at(i, j), 1.0)? * a.norm_sqr());
    }
    ComplexField::from_values_masked(grid, values, fz.validity().to_vec())
}

/// `max |Delta_h log sigma|`.
pub fn lemma2_residual(f: &ComplexField, metric: &Metric) -> Result<f64> {
    let s2 = sigma_field(f, metric)?;
    harmonic_residual(&s2.map(|v| real(0.5 * v.re.ln())))
}

/// `log |mu|` with nodes near zeros of `mu` masked.
pub fn log_abs_mu(mu: &ComplexField) -> ComplexField {
    mu.masked_where(|_, _, v| v.norm() >= MU_ZERO).map(|v| real(v.norm().ln()))
}

/// `max |Delta_h log |mu||` off the zeros of `mu`; `None` when `mu`
/// vanishes everywhere (conformal map), where the lemma does not apply.
pub fn lemma1_residual(f: &ComplexField) -> Result<Option<f64>> {
    lemma1_residual_mu(&beltrami_coefficient(f)?)
}

pub fn lemma1_residual_mu(mu: &ComplexField) -> Result<Option<f64>> {
    match harmonic_residual(&log_abs_mu(mu)) {
        Ok(r) => Ok(Some(r)),
        Err(LabError::NoValidInterior) => Ok(None),
        Err(e) => Err(e),
    }
}

/// [`lemma1_residual`] with a closed-form `log |mu|` sampled on `grid`.
pub fn lemma1_residual_analytic(grid: &GridSpec, log_abs_mu: impl Fn(Complex64) -> f64) -> Result<f64> {
    harmonic_residual(&ComplexField::from_fn(*grid, |z| real(log_abs_mu(z))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    /// Interior nodes where `|mu|` exceeds all 8 neighbours by more than `guard`.
    pub maxima: Vec<(usize, usize)>,
    /// Interior nodes where `|mu| > 1e-6` is below all 8 neighbours by more than `guard`.
    pub minima: Vec<(usize, usize)>,
    pub guard: f64,
}

impl MaxPrincipleReport {
    pub fn is_clean(&self) -> bool {
        self.maxima.is_empty() && self.minima.is_empty()
    }
}

pub fn max_principle_scan(f: &ComplexField) -> Result<MaxPrincipleReport> {
    Ok(max_principle_scan_mu(&beltrami_coefficient(f)?, DEFAULT_CURVATURE_SCALE))
}

pub fn max_principle_scan_mu(mu: &ComplexField, curvature_scale: f64) -> MaxPrincipleReport {
    let g = mu.grid();
    let guard = 10.0 * g.h * g.h * curvature_scale;
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    for (i, j, v) in mu.iter_valid() {
        if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
            continue;
        }
        let m = v.norm();
        let mut neighbours = Vec::with_capacity(8);
        for dj in -1i32..=1 {
            for di in -1i32..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (a, b) = ((i as i32 + di) as usize, (j as i32 + dj) as usize);
                match mu.get(a, b) {
                    Some(n) => neighbours.push(n.norm()),
                    None => break,
                }
            }
        }
        if neighbours.len() < 8 {
            continue;
        }
        if neighbours.iter().all(|&n| m > n + guard) {
            maxima.push((i, j));
        }
        if m > 1e-6 && neighbours.iter().all(|&n| m < n - guard) {
            minima.push((i, j));
        }
    }
    MaxPrincipleReport { maxima, minima, guard }
}

/// Harmonicity threshold for `log sigma^2` before conjugation:
/// `0.05 (1 + max |log sigma^2|)`. Numerically harmonic maps leave an
/// `O(h^2)` Laplacian well below it; non-harmonic maps sit far above.
pub fn psi_threshold(log_sigma2: &ComplexField) -> f64 {
    0.05 * (1.0 + log_sigma2.max_abs())
}

/// `Psi = exp(log sigma^2 + i conj(log sigma^2))`, the holomorphic function
/// with `|Psi| = sigma^2`, normalised to be real at the centre of its
/// valid rectangle.
pub fn reconstruct_psi(f: &ComplexField, metric: &Metric) -> Result<ComplexField> {
    let u = sigma_field(f, metric)?.map(|v| real(v.re.ln()));
    reconstruct_psi_from_log(&u, psi_threshold(&u))
}

pub fn reconstruct_psi_with(f: &ComplexField, metric: &Metric, threshold: f64) -> Result<ComplexField> {
    let u = sigma_field(f, metric)?.map(|v| real(v.re.ln()));
    reconstruct_psi_from_log(&u, threshold)
}

fn reconstruct_psi_from_log(u: &ComplexField, threshold: f64) -> Result<ComplexField> {
    let (i0, j0, nx, ny) = u.valid_rectangle().ok_or(LabError::IrregularMask)?;
    let v = harmonic_conjugate_with(u, (i0 + nx / 2, j0 + ny / 2), threshold)?;
    u.zip_map(&v, |a, b| Complex64::new(a.re, b.re).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Residual {
    /// `max | |mu| - |Phi| / |Psi| |`.
    pub modulus: f64,
    /// `max |Psi_zbar| / |Psi|`.
    pub holomorphy: f64,
}

impl Lemma3Residual {
    pub fn total(&self) -> f64 {
        self.modulus.max(self.holomorphy)
    }
}

/// `|mu_f| = |Phi| / |Psi|` with `Psi` holomorphic. Since `|Psi| = sigma^2`
/// by construction, the modulus defect only sees rounding; the holomorphy
/// defect of the reconstructed `Psi` carries the discretisation error.
pub fn lemma3_residual(f: &ComplexField, metric: &Metric) -> Result<Lemma3Residual> {
    let mu = beltrami_coefficient(f)?;
    let phi = hopf(f, metric)?.phi;
    let psi = reconstruct_psi(f, metric)?;
    let ratio = phi.zip_map(&psi, |p, s| real(p.norm() / s.norm()))?;
    let modulus = mu.zip_map(&ratio, |m, r| real(m.norm() - r.re))?.max_abs();
    let dpsi = wirtinger_zbar(&psi)?;
    let holomorphy = dpsi.zip_map(&psi, |d, s| real(d.norm() / s.norm()))?.max_abs();
    Ok(Lemma3Residual { modulus, holomorphy })
}

/// Euclidean-harmonic companion `h = psi + conj(phi)` with `psi' = Psi`,
/// `phi' = Phi`, so `h_z = Psi`, `h_zbar = conj(Phi)` and `|mu_h| = |mu_f|`.
/// `basepoint` defaults to the centre of the common valid rectangle.
pub fn companion_map(f: &ComplexField, metric: &Metric, basepoint: Option<(usize, usize)>) -> Result<ComplexField> {
    let phi = hopf(f, metric)?.phi;
    let psi = reconstruct_psi(f, metric)?;
    let common = phi.zip_map(&psi, |p, _| p)?;
    let (i0, j0, nx, ny) = common.valid_rectangle().ok_or(LabError::IrregularMask)?;
    let psi = psi.zip_map(&common, |s, _| s)?;
    let base = basepoint.unwrap_or((i0 + nx / 2, j0 + ny / 2));
    let big = holomorphic_antiderivative(&psi, base)?;
    let small = holomorphic_antiderivative(&common, base)?;
    big.zip_map(&small, |a, b| a + b.conj())
}

/// `mu^g` of `g = f^{-1}` on `target`: `-f_zbar / conj(f_z)` at `z = g(w)`,
/// with the derivative fields sampled bilinearly. Targets outside the
/// image, or whose preimage touches masked derivatives, are masked.
pub fn pushforward_mu(f: &ComplexField, target: &GridSpec) -> Result<ComplexField> {
    let (fz, fzb) = derivatives(f)?;
    let pre = invert_map(f, target)?;
    let mut values = vec![ZERO; target.len()];
    let mut valid = vec![false; target.len()];
    for (i, j, z) in pre.iter_valid() {
        if let (Ok(a), Ok(b)) = (bilinear_sample(&fz, z), bilinear_sample(&fzb, z)) {
            let k = target.index(i, j);
            values[k] = -b / a.conj();
            valid[k] = true;
        }
    }
    ComplexField::from_values_masked(*target, values, valid)
}

/// `arg(f_z conj(f_zbar))` unwrapped row by row (first node of a row
/// against the node below it), with zeros of `mu` masked.
pub fn unwrapped_hopf_arg(f: &ComplexField) -> Result<ComplexField> {
    let (fz, fzb) = derivatives(f)?;
    let grid = *f.grid();
    let prod = fz
        .zip_map(&fzb, |a, b| a * b.conj())?
        .zip_map(&fz, |p, a| if p.norm() >= MU_ZERO * a.norm_sqr() { p } else { ZERO })?
        .masked_where(|_, _, p| p != ZERO);
    let mut values = vec![ZERO; grid.len()];
    let two_pi = std::f64::consts::TAU;
    let near = |x: f64, reference: f64| x - two_pi * ((x - reference) / two_pi).round();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let Some(p) = prod.get(i, j) else { continue };
            let raw = p.arg();
            let reference = if i > 0 && prod.is_valid(i - 1, j) {
                Some(values[grid.index(i - 1, j)].re)
            } else if j > 0 && prod.is_valid(i, j - 1) {
                Some(values[grid.index(i, j - 1)].re)
            } else {
                None
            };
            values[grid.index(i, j)] = real(reference.map_or(raw, |r| near(raw, r)));
        }
    }
    ComplexField::from_values_masked(grid, values, prod.validity().to_vec())
}

/// `max |Delta_h arg Phi|`, or `None` when `mu` vanishes everywhere.
pub fn arg_hopf_residual(f: &ComplexField) -> Result<Option<f64>> {
    match harmonic_residual(&unwrapped_hopf_arg(f)?) {
        Ok(r) => Ok(Some(r)),
        Err(LabError::NoValidInterior) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Population standard deviation of `|mu|` over valid nodes.
pub fn modulus_spread(mu: &ComplexField) -> f64 {
    let n = mu.valid_count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = mu.iter_valid().map(|(_, _, v)| v.norm()).sum::<f64>() / n;
    (mu.iter_valid().map(|(_, _, v)| (v.norm() - mean).powi(2)).sum::<f64>() / n).sqrt()
}
