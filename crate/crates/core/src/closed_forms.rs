//! Exact fixtures: the linear family, the tanh strip map over `exp_x`, the
//! real-coefficient example over `exp_x` with its boundedness audit, and
//! the `exp_y` entire coefficient in two variants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::{inverse_beltrami_residual_analytic, nu_quasiregular_residual_analytic, Convention};
use crate::error::{LabError, Result};
use crate::field::{ComplexField, GridSpec, Jet};
use crate::metric::builtin_metric;
use crate::tension::tension_residual;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `f(z) = a z + (1 - a) conj(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub a: Complex64,
}

pub fn linear_map(a: Complex64) -> Result<LinearMap> {
    let b = 1.0 - a;
    if !(a.norm() > b.norm()) {
        return Err(LabError::OrientationViolation { a_abs: a.norm(), b_abs: b.norm() });
    }
    Ok(LinearMap { a })
}

impl LinearMap {
    pub fn b(&self) -> Complex64 {
        1.0 - self.a
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.a * z + self.b() * z.conj()
    }

    pub fn inverse(&self, w: Complex64) -> Complex64 {
        let (a, b) = (self.a, self.b());
        (a.conj() * w - b * w.conj()) / (a.norm_sqr() - b.norm_sqr())
    }

    pub fn mu(&self) -> Complex64 {
        self.b() / self.a
    }

    pub fn distortion(&self) -> f64 {
        let (a, b) = (self.a.norm(), self.b().norm());
        (a + b) / (a - b)
    }

    pub fn jet(&self, z: Complex64) -> Jet {
        Jet { value: self.eval(z), dx: self.a + self.b(), dy: I * (self.a - self.b()) }
    }

    pub fn sample(&self, grid: &GridSpec) -> ComplexField {
        ComplexField::from_fn(*grid, |z| self.eval(z))
    }

    pub fn sample_inverse(&self, grid: &GridSpec) -> ComplexField {
        ComplexField::from_fn(*grid, |w| self.inverse(w))
    }
}

/// `K(f o g^{-1})` for `f = a z + (1-a) conj z`, `g = b z + (1-b) conj z`:
/// `(|1-a-conj b| + |a-b|) / (|1-a-conj b| - |a-b|)`.
pub fn linear_composition_distortion(a: Complex64, b: Complex64) -> f64 {
    let p = (1.0 - a - b.conj()).norm();
    let q = (a - b).norm();
    (p + q) / (p - q)
}

/// `f(z) = log cosh(x - shift) + i y`, harmonic into `exp_x` on `x > shift`.
/// With `u = log cosh`, `u'' = 1 - u'^2` is the tension equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhStripMap {
    pub shift: f64,
}

pub fn tanh_strip_map(shift: f64) -> TanhStripMap {
    TanhStripMap { shift }
}

impl TanhStripMap {
    pub fn check_domain(&self, grid: &GridSpec) -> Result<()> {
        if grid.x0 <= self.shift {
            return Err(LabError::DomainIncludesDegeneracy(self.shift));
        }
        Ok(())
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let t = z.re - self.shift;
        // log cosh t = |t| + log((1 + e^{-2|t|}) / 2), stable for large |t|.
        let u = t.abs() + (-2.0 * t.abs()).exp().ln_1p() - std::f64::consts::LN_2;
        Complex64::new(u, z.im)
    }

    pub fn jet(&self, z: Complex64) -> Jet {
        Jet { value: self.eval(z), dx: Complex64::new((z.re - self.shift).tanh(), 0.0), dy: I }
    }

    /// `-e^{-2(x - shift)}`.
    pub fn mu(&self, z: Complex64) -> Complex64 {
        Complex64::new(-(-2.0 * (z.re - self.shift)).exp(), 0.0)
    }

    /// `log|mu| = -2 (x - shift)`.
    pub fn log_abs_mu(&self, z: Complex64) -> f64 {
        -2.0 * (z.re - self.shift)
    }

    /// Hopf differential `rho(f) f_z conj(f_zbar) = -1/4`.
    pub fn hopf(&self, _z: Complex64) -> Complex64 {
        Complex64::new(-0.25, 0.0)
    }

    /// `sigma^2 = rho(f) |f_z|^2 = e^{2(x - shift)} / 4`.
    pub fn sigma_sq(&self, z: Complex64) -> f64 {
        (2.0 * (z.re - self.shift)).exp() / 4.0
    }

    /// `Psi = e^{2(z - shift)} / 4`, the holomorphic function with `|Psi| = sigma^2`.
    pub fn psi(&self, z: Complex64) -> Complex64 {
        (2.0 * (z - self.shift)).exp() / 4.0
    }

    /// Inverse map `w -> shift + arccosh(e^{Re w}) + i Im w` (for `Re w > 0`).
    pub fn inverse(&self, w: Complex64) -> Complex64 {
        Complex64::new(self.shift + w.re.exp().acosh(), w.im)
    }

    /// Beltrami coefficient of the inverse map as a function of `w`:
    /// `e^{-2(x(w) - shift)}`.
    pub fn inverse_mu(&self, w: Complex64) -> Complex64 {
        Complex64::new((-2.0 * (self.inverse(w).re - self.shift)).exp(), 0.0)
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<ComplexField> {
        self.check_domain(grid)?;
        Ok(ComplexField::from_fn(*grid, |z| self.eval(z)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example51Variant {
    /// `delta = c e^{-x}`, as printed.
    PaperLiteral,
    /// `delta = c e^{-2x}`, the exponent the Wirtinger factor 1/2 requires.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example51Params {
    pub c: f64,
    pub variant: Example51Variant,
}

impl Example51Params {
    pub fn new(c: f64, variant: Example51Variant) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LabError::InvalidParameter(format!("c must be positive and finite, got {c}")));
        }
        Ok(Self { c, variant })
    }

    /// `s` in `delta = c e^{-s x}`.
    pub fn exponent(&self) -> f64 {
        match self.variant {
            Example51Variant::PaperLiteral => 1.0,
            Example51Variant::Corrected => 2.0,
        }
    }

    fn delta(&self, x: f64) -> f64 {
        self.c * (-self.exponent() * x).exp()
    }
}

/// `(delta, sqrt(delta (2 + delta)))`, or `None` once `delta` overflows.
fn delta_root(x: f64, p: &Example51Params) -> Option<(f64, f64)> {
    let d = p.delta(x);
    d.is_finite().then(|| (d, d.sqrt() * (2.0 + d).sqrt()))
}

/// `mu = sqrt((1 + delta)^2 - 1) - (1 + delta)`, evaluated as
/// `-1 / (1 + delta + sqrt(delta (2 + delta)))` to avoid cancellation.
pub fn example51_mu(x: f64, p: &Example51Params) -> f64 {
    match delta_root(x, p) {
        Some((d, s)) => -1.0 / (1.0 + d + s),
        None => -0.0,
    }
}

/// `d mu / dx = -s delta / (sqrt(delta (2 + delta)) (1 + delta + sqrt(...)))`.
pub fn example51_mu_prime(x: f64, p: &Example51Params) -> f64 {
    match delta_root(x, p) {
        Some((d, s)) if s > 0.0 => -p.exponent() * d / (s * (1.0 + d + s)),
        _ => 0.0,
    }
}

/// `u' = -1 + 2 / (2 + delta - sqrt(...))`, evaluated as
/// `(delta + r) / (2 + delta + r)` with `r = sqrt(delta (2 + delta))`.
pub fn example51_uprime(x: f64, p: &Example51Params) -> f64 {
    match delta_root(x, p) {
        Some((d, s)) => (d + s) / (2.0 + d + s),
        None => 1.0,
    }
}

/// `u(x) = int_0^x u'` by adaptive Simpson quadrature.
pub fn example51_u(x: f64, p: &Example51Params) -> Result<f64> {
    integrate(|t| example51_uprime(t, p), 0.0, x, 1e-10)
}

/// Jet of `mu` as a function on the plane (depends on `Re w` only).
pub fn example51_mu_jet(p: Example51Params) -> impl Fn(Complex64) -> Jet {
    move |w| Jet {
        value: Complex64::new(example51_mu(w.re, &p), 0.0),
        dx: Complex64::new(example51_mu_prime(w.re, &p), 0.0),
        dy: ZERO,
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(LabError::QuadratureFailure { a, b });
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(LabError::QuadratureFailure { a, b });
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    // Split into unit pieces so the tolerance is not spent on one panel.
    let pieces = ((b - a).abs().ceil() as usize).max(1);
    let step = (b - a) / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let (lo, hi) = (a + k as f64 * step, if k + 1 == pieces { b } else { a + (k + 1) as f64 * step });
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = simpson(fa, fm, fb, lo, hi);
        total += recurse(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)?;
    }
    Ok(total)
}

/// Upper bound of `int_X^inf u'` from
/// `u' <= sqrt(delta/2) + delta/2 + delta^{3/2} / (4 sqrt 2)`.
pub fn example51_tail_bound(x: f64, p: &Example51Params) -> f64 {
    let s = p.exponent();
    let c = p.c;
    let r2 = std::f64::consts::SQRT_2;
    (2.0 / s) * (c / 2.0).sqrt() * (-s * x / 2.0).exp()
        + c / (2.0 * s) * (-s * x).exp()
        + c.powf(1.5) / (4.0 * r2 * 1.5 * s) * (-1.5 * s * x).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example51Audit {
    pub c: f64,
    /// `u(40)` by quadrature.
    pub u_at_40: f64,
    /// Analytic bound on `int_40^inf u'`.
    pub tail_bound: f64,
    /// `u(40) + tail_bound`, an upper bound of `sup u`.
    pub sup_u_bound: f64,
    pub u40_minus_u20: f64,
    /// `2 sqrt(c/2) e^{-10}`.
    pub u40_minus_u20_bound: f64,
    /// Smallest `u'` over `x in [-20, 40]` (step 0.01).
    pub min_uprime: f64,
    /// Largest `|mu|` over `x in [-20, 40]` (step 0.01).
    pub max_abs_mu: f64,
    /// Tension residual of the sampled map against `exp_x`.
    pub tension_residual: f64,
    pub inverse_residual_paper_literal: f64,
    pub inverse_residual_corrected: f64,
    pub nu_residual_paper_literal: f64,
    pub nu_residual_corrected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example51Map {
    pub params: Example51Params,
    /// `f = u(x) + i y`.
    pub field: ComplexField,
    pub audit: Example51Audit,
}

/// Samples `f = u(x) + i y` and runs the audit bundle. The residuals of the
/// inverse-map equation and of the twist use the printed convention with
/// closed-form derivatives, over the same grid.
pub fn example51_map(grid: &GridSpec, p: &Example51Params) -> Result<Example51Map> {
    let mut columns = Vec::with_capacity(grid.nx);
    for i in 0..grid.nx {
        let x = grid.x0 + i as f64 * grid.h;
        columns.push(example51_u(x, p)?);
    }
    let field = ComplexField::from_fn_ij(*grid, |i, j| Complex64::new(columns[i], grid.node(i, j).im));

    let u40 = example51_u(40.0, p)?;
    let u20 = example51_u(20.0, p)?;
    let tail = example51_tail_bound(40.0, p);
    let (mut min_uprime, mut max_abs_mu) = (f64::INFINITY, 0.0f64);
    for k in 0..=6000 {
        let x = -20.0 + 0.01 * k as f64;
        min_uprime = min_uprime.min(example51_uprime(x, p));
        max_abs_mu = max_abs_mu.max(example51_mu(x, p).abs());
    }
    let exp_x = builtin_metric("exp_x")?;
    let tension = tension_residual(&field, &exp_x)?.max_abs();
    let residuals = |variant| -> Result<(f64, f64)> {
        let q = Example51Params { c: p.c, variant };
        let r = inverse_beltrami_residual_analytic(grid, example51_mu_jet(q), &exp_x, Convention::Printed).max_abs();
        let n = nu_quasiregular_residual_analytic(grid, example51_mu_jet(q), &exp_x, Convention::Printed)?.max_abs();
        Ok((r, n))
    };
    let (rp, np) = residuals(Example51Variant::PaperLiteral)?;
    let (rc, nc) = residuals(Example51Variant::Corrected)?;
    let audit = Example51Audit {
        c: p.c,
        u_at_40: u40,
        tail_bound: tail,
        sup_u_bound: u40 + tail,
        u40_minus_u20: u40 - u20,
        u40_minus_u20_bound: 2.0 * (p.c / 2.0).sqrt() * (-10.0f64).exp(),
        min_uprime,
        max_abs_mu,
        tension_residual: tension,
        inverse_residual_paper_literal: rp,
        inverse_residual_corrected: rc,
        nu_residual_paper_literal: np,
        nu_residual_corrected: nc,
    };
    Ok(Example51Map { params: *p, field, audit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpYVariant {
    /// `alpha e^{i Re w / 2}`, as printed.
    PaperLiteral,
    /// `alpha e^{-i Re w}`, the entire solution for `lambda = -i/2`.
    Derived,
}

/// Entire coefficient over `exp_y` (`log rho = Im w`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpYExample {
    pub alpha: Complex64,
    pub variant: ExpYVariant,
}

pub fn exp_y_example_mu(alpha: Complex64, variant: ExpYVariant) -> Result<ExpYExample> {
    if !(alpha.norm() < 1.0) {
        return Err(LabError::AlphaOutOfDisk(alpha.norm()));
    }
    Ok(ExpYExample { alpha, variant })
}

impl ExpYExample {
    fn rate(&self) -> f64 {
        match self.variant {
            ExpYVariant::PaperLiteral => 0.5,
            ExpYVariant::Derived => -1.0,
        }
    }

    pub fn value(&self, w: Complex64) -> Complex64 {
        self.alpha * Complex64::from_polar(1.0, self.rate() * w.re)
    }

    pub fn jet(&self, w: Complex64) -> Jet {
        let value = self.value(w);
        Jet { value, dx: value * I * self.rate(), dy: ZERO }
    }

    pub fn sample(&self, grid: &GridSpec) -> ComplexField {
        ComplexField::from_fn(*grid, |w| self.value(w))
    }
}

/// Non-harmonic control `f = z + 0.3 e^{-|z|^2} conj(z)`; `|mu|` peaks at 0.
pub fn peaked_control(z: Complex64) -> Complex64 {
    z + 0.3 * (-z.norm_sqr()).exp() * z.conj()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beltrami::{inverse_beltrami_residual, nu_quasiregular_residual};
    use crate::field::{wirtinger_z, wirtinger_zbar};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Distortion of a real-linear map from its 2x2 matrix (singular values).
    fn matrix_distortion(m: [[f64; 2]; 2]) -> f64 {
        let [[a, b], [cc, d]] = m;
        let t = a * a + b * b + cc * cc + d * d;
        let det = (a * d - b * cc).abs();
        let disc = (t * t / 4.0 - det * det).max(0.0).sqrt();
        let s1 = (t / 2.0 + disc).sqrt();
        let s2 = (t / 2.0 - disc).max(0.0).sqrt();
        s1 / s2
    }

    fn matrix_of(f: impl Fn(Complex64) -> Complex64) -> [[f64; 2]; 2] {
        let e1 = f(c(1.0, 0.0)) - f(ZERO);
        let e2 = f(c(0.0, 1.0)) - f(ZERO);
        [[e1.re, e2.re], [e1.im, e2.im]]
    }

    #[test]
    fn linear_family() {
        let id = linear_map(c(1.0, 0.0)).unwrap();
        assert_eq!(id.eval(c(0.3, -0.7)), c(0.3, -0.7));
        assert_eq!(id.distortion(), 1.0);
        let f = linear_map(c(2.0, 0.0)).unwrap();
        assert_eq!(f.mu(), c(-0.5, 0.0));
        assert!((f.distortion() - 3.0).abs() < 1e-15);
        assert!((linear_composition_distortion(c(2.0, 0.0), c(1.0, 0.0)) - 3.0).abs() < 1e-15);
        assert!(matches!(linear_map(c(0.5, 0.0)), Err(LabError::OrientationViolation { .. })));
        assert!(matches!(linear_map(c(0.2, 0.1)), Err(LabError::OrientationViolation { .. })));
        let w = c(0.4, 1.3);
        assert!((f.eval(f.inverse(w)) - w).norm() < 1e-15);
        let grid = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, 0.25).unwrap();
        let s = f.sample(&grid);
        for (i, j, v) in s.iter_valid() {
            assert_eq!(v, f.eval(grid.node(i, j)));
        }
        let jet = f.jet(c(0.2, 0.1));
        assert!((jet.dzbar() / jet.dz() - f.mu()).norm() < 1e-15);
    }

    #[test]
    fn composition_distortion_matches_matrix_oracle() {
        for (a, b) in [(c(2.0, 0.0), c(1.0, 0.0)), (c(1.5, 0.5), c(0.8, -0.3)), (c(3.0, -1.0), c(1.2, 0.4))] {
            let f = linear_map(a).unwrap();
            let g = linear_map(b).unwrap();
            let k = matrix_distortion(matrix_of(|z| f.eval(g.inverse(z))));
            assert!((k - linear_composition_distortion(a, b)).abs() < 1e-9 * k, "{a} {b}");
        }
    }

    #[test]
    fn tanh_fixture_values() {
        let t = tanh_strip_map(0.0);
        let v = t.eval(c(1.0, 0.0));
        assert!((v.re - 0.4337808304830272).abs() < 1e-15 && v.im == 0.0);
        assert!((t.mu(c(1.0, 0.0)).re + 0.1353352832366127).abs() < 1e-15);
        // mu from the derivative jet agrees with the closed form.
        for z in [c(0.7, 0.2), c(2.0, -1.0)] {
            let j = t.jet(z);
            assert!((j.dzbar() / j.dz() - t.mu(z)).norm() < 1e-14);
            let rho = (2.0 * t.eval(z).re).exp();
            assert!((rho * j.dz() * j.dzbar().conj() - t.hopf(z)).norm() < 1e-14);
            assert!((rho * j.dz().norm_sqr() - t.sigma_sq(z)).abs() < 1e-13 * t.sigma_sq(z));
            assert!((t.psi(z).norm() - t.sigma_sq(z)).abs() < 1e-13 * t.sigma_sq(z));
            assert!((t.inverse(t.eval(z)) - z).norm() < 1e-12);
        }
        let bad = GridSpec::covering(0.0, 1.0, 0.0, 1.0, 0.25).unwrap();
        assert!(matches!(t.sample(&bad), Err(LabError::DomainIncludesDegeneracy(_))));
        let shifted = tanh_strip_map(-1.0);
        assert!((shifted.eval(c(0.0, 0.5)) - t.eval(c(1.0, 0.5))).norm() < 1e-15);
    }

    #[test]
    fn tanh_fixture_inverse_coefficient() {
        // Numeric Beltrami coefficient of the sampled inverse.
        let t = tanh_strip_map(0.0);
        let grid = GridSpec::covering(0.5, 2.0, 0.0, 1.0, 1.0 / 64.0).unwrap();
        let g = ComplexField::from_fn(grid, |w| t.inverse(w));
        let gz = wirtinger_z(&g).unwrap();
        let mu = wirtinger_zbar(&g).unwrap().zip_map(&gz, |a, b| a / b).unwrap();
        assert!(mu.max_error_against(|w| t.inverse_mu(w)) < 1e-3);
    }

    #[test]
    fn example51_reference_values() {
        let p = Example51Params::new(1.0, Example51Variant::PaperLiteral).unwrap();
        let sqrt3 = 3f64.sqrt();
        assert!((example51_mu(0.0, &p) - (sqrt3 - 2.0)).abs() < 1e-15);
        let up = example51_uprime(0.0, &p);
        assert!((up - (2.0 / (3.0 - sqrt3) - 1.0)).abs() < 1e-15);
        assert!((up - 0.5773503).abs() < 1e-7);
        assert!(((up - 1.0) / (up + 1.0) - example51_mu(0.0, &p)).abs() < 1e-12);
        // mu -> 0 as x -> -inf and mu -> -1 as x -> +inf.
        let tail = -1.0 / (2.0 * (1.0 + 20f64.exp()));
        assert!((example51_mu(-20.0, &p) - tail).abs() < 1e-6 * tail.abs());
        let right = -1.0 + (2.0f64).sqrt() * (-10.0f64).exp();
        assert!((example51_mu(20.0, &p) - right).abs() < 1e-8);
        let u_left = example51_uprime(-20.0, &p);
        assert!((0.99..=1.0).contains(&u_left));
        let r = example51_uprime(20.0, &p) / ((0.5f64).sqrt() * (-10.0f64).exp());
        assert!((0.99..=1.01).contains(&r));
        assert!(Example51Params::new(0.0, Example51Variant::Corrected).is_err());
        assert!(Example51Params::new(-1.0, Example51Variant::Corrected).is_err());
    }

    #[test]
    fn example51_against_printed_formulas() {
        // Direct (cancelling) evaluation of the printed expressions where it is accurate.
        for variant in [Example51Variant::PaperLiteral, Example51Variant::Corrected] {
            let p = Example51Params::new(0.7, variant).unwrap();
            for k in -30..=30 {
                let x = k as f64 * 0.1;
                let d = 0.7 * (-p.exponent() * x).exp();
                let printed_mu = ((1.0 + d) * (1.0 + d) - 1.0).sqrt() - (1.0 + d);
                let printed_up = -1.0 + 2.0 / (2.0 + d - ((1.0 + d) * (1.0 + d) - 1.0).sqrt());
                assert!((example51_mu(x, &p) - printed_mu).abs() < 1e-12);
                assert!((example51_uprime(x, &p) - printed_up).abs() < 1e-12);
                let h = 1e-5;
                let fd = (example51_mu(x + h, &p) - example51_mu(x - h, &p)) / (2.0 * h);
                assert!((example51_mu_prime(x, &p) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn example51_identities() {
        let p = Example51Params::new(1.0, Example51Variant::PaperLiteral).unwrap();
        for k in -200..=200 {
            let x = k as f64 * 0.1;
            let mu = example51_mu(x, &p);
            let up = example51_uprime(x, &p);
            assert!(((up - 1.0) / (up + 1.0) - mu).abs() <= 1e-12, "x = {x}");
            assert!(mu.abs() < 1.0 && up > 0.0);
        }
        // d/dx log(-mu (1+mu)^{-2}) = s, i.e. mu (1+mu)^{-2} = -e^{s x} / (2c).
        for variant in [Example51Variant::PaperLiteral, Example51Variant::Corrected] {
            let p = Example51Params::new(1.0, variant).unwrap();
            let log_ratio = |x: f64| {
                let m = example51_mu(x, &p);
                (-m / ((1.0 + m) * (1.0 + m))).ln()
            };
            for x in [-2.0, -0.5, 0.0, 1.0, 3.0] {
                let h = 1e-4;
                let d = (log_ratio(x + h) - log_ratio(x - h)) / (2.0 * h);
                assert!((d - p.exponent()).abs() < 1e-6);
                let m = example51_mu(x, &p);
                assert!((m / ((1.0 + m) * (1.0 + m)) + (p.exponent() * x).exp() / 2.0).abs() < 1e-12 * (p.exponent() * x).exp());
            }
        }
    }

    #[test]
    fn quadrature() {
        assert!((integrate(|x| x.exp(), 0.0, 1.0, 1e-12).unwrap() - (1f64.exp() - 1.0)).abs() < 1e-11);
        assert!((integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap() - 2.0).abs() < 1e-11);
        assert!((integrate(|x| x * x, 2.0, -1.0, 1e-12).unwrap() + 3.0).abs() < 1e-12);
        assert!(matches!(integrate(|x| 1.0 / x, -1.0, 1.0, 1e-10), Err(LabError::QuadratureFailure { .. })));
        let p = Example51Params::new(1.0, Example51Variant::PaperLiteral).unwrap();
        let u = example51_u(2.0, &p).unwrap();
        let trap: f64 = (0..200000).map(|k| {
            let (a, b) = (k as f64 * 1e-5, (k + 1) as f64 * 1e-5);
            0.5 * (example51_uprime(a, &p) + example51_uprime(b, &p)) * 1e-5
        }).sum();
        assert!((u - trap).abs() < 1e-9);
    }

    #[test]
    fn example51_audit_bundle() {
        let p = Example51Params::new(1.0, Example51Variant::PaperLiteral).unwrap();
        let grid = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, 1.0 / 16.0).unwrap();
        let m = example51_map(&grid, &p).unwrap();
        let a = &m.audit;
        assert!(a.u40_minus_u20 <= a.u40_minus_u20_bound);
        assert!(a.sup_u_bound.is_finite() && a.sup_u_bound >= a.u_at_40);
        assert!(a.min_uprime > 0.0 && a.max_abs_mu < 1.0);
        assert!(a.nu_residual_paper_literal > 0.05);
        assert!(a.inverse_residual_paper_literal > 0.05);
        assert!(a.nu_residual_corrected <= 1e-12);
        assert!(a.inverse_residual_corrected <= 1e-12);
        for (i, j, v) in m.field.iter_valid() {
            assert_eq!(v.im, grid.node(i, j).im);
        }
        assert_eq!(m.field.at(grid.nx / 2, 0).re, 0.0);
    }

    #[test]
    fn example51_paper_literal_residual_is_half_mu_one_plus_mu() {
        let exp_x = builtin_metric("exp_x").unwrap();
        let p = Example51Params::new(1.0, Example51Variant::PaperLiteral).unwrap();
        let grid = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, 1.0 / 32.0).unwrap();
        let r = inverse_beltrami_residual_analytic(&grid, example51_mu_jet(p), &exp_x, Convention::Printed);
        let q = nu_quasiregular_residual_analytic(&grid, example51_mu_jet(p), &exp_x, Convention::Printed).unwrap();
        for (i, j, v) in r.iter_valid() {
            let mu = example51_mu(grid.node(i, j).re, &p);
            let expect = (mu * (1.0 + mu)).abs() / 2.0;
            assert!((v.norm() - expect).abs() <= 1e-6);
            assert!((q.at(i, j).norm() - expect).abs() <= 1e-6);
        }
        // Numeric derivatives: corrected variant is O(h^2).
        let corrected = Example51Params::new(1.0, Example51Variant::Corrected).unwrap();
        let numeric = |h: f64| {
            let g = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, h).unwrap();
            let mu = ComplexField::from_fn(g, |w| c(example51_mu(w.re, &corrected), 0.0));
            (inverse_beltrami_residual(&mu, &exp_x).unwrap().max_abs(), nu_quasiregular_residual(&mu, &exp_x).unwrap())
        };
        let (r1, q1) = numeric(1.0 / 16.0);
        let (r2, q2) = numeric(1.0 / 32.0);
        assert!((r1 / r2 - 4.0).abs() < 1.0 && (q1 / q2 - 4.0).abs() < 1.0);
    }

    #[test]
    fn exp_y_variants() {
        let exp_y = builtin_metric("exp_y").unwrap();
        let grid = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, 1.0 / 16.0).unwrap();
        let alpha = c(0.3, -0.4);
        let derived = exp_y_example_mu(alpha, ExpYVariant::Derived).unwrap();
        let r = inverse_beltrami_residual_analytic(&grid, |w| derived.jet(w), &exp_y, Convention::Printed);
        assert!(r.max_abs() <= 1e-10);
        let literal = exp_y_example_mu(alpha, ExpYVariant::PaperLiteral).unwrap();
        let r = inverse_beltrami_residual_analytic(&grid, |w| literal.jet(w), &exp_y, Convention::Printed);
        // R = (3i/4)(mu - |mu|^2) for the printed coefficient.
        for (i, j, v) in r.iter_valid() {
            let mu = literal.value(grid.node(i, j));
            assert!((v - 0.75 * I * (mu - mu.norm_sqr())).norm() < 1e-12);
        }
        assert!(r.max_abs() > 0.1);
        for variant in [ExpYVariant::PaperLiteral, ExpYVariant::Derived] {
            let zero = exp_y_example_mu(ZERO, variant).unwrap();
            let r = inverse_beltrami_residual_analytic(&grid, |w| zero.jet(w), &exp_y, Convention::Printed);
            assert_eq!(r.max_abs(), 0.0);
        }
        assert!(matches!(exp_y_example_mu(c(1.0, 0.0), ExpYVariant::Derived), Err(LabError::AlphaOutOfDisk(_))));
    }

    #[test]
    fn peaked_control_has_interior_peak() {
        let grid = GridSpec::covering(-1.0, 1.0, -1.0, 1.0, 1.0 / 16.0).unwrap();
        let f = ComplexField::from_fn(grid, peaked_control);
        let fz = wirtinger_z(&f).unwrap();
        let mu = wirtinger_zbar(&f).unwrap().zip_map(&fz, |a, b| a / b).unwrap();
        let centre = mu.at(grid.nx / 2, grid.ny / 2).norm();
        assert!((centre - 0.3).abs() < 1e-2);
        assert!(mu.iter_valid().all(|(_, _, v)| v.norm() <= centre + 1e-12));
    }

    proptest! {
        #[test]
        fn linear_inverse_roundtrip(re in 0.6f64..3.0, im in -2.0f64..2.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let a = c(re, im);
            prop_assume!(a.norm() > (1.0 - a).norm() * 1.01);
            let f = linear_map(a).unwrap();
            let z = c(x, y);
            prop_assert!((f.inverse(f.eval(z)) - z).norm() <= 1e-10 * (1.0 + z.norm()));
            prop_assert!(f.mu().norm() < 1.0);
        }

        #[test]
        fn example51_mu_stays_in_disk(x in -700.0f64..700.0, cc in 1e-3f64..1e3) {
            for variant in [Example51Variant::PaperLiteral, Example51Variant::Corrected] {
                let p = Example51Params::new(cc, variant).unwrap();
                let mu = example51_mu(x, &p);
                // Rounds to -1 once sqrt(delta) drops below machine epsilon.
                prop_assert!(mu <= 0.0 && mu >= -1.0);
                prop_assert!(example51_uprime(x, &p) >= 0.0);
            }
        }
    }
}
