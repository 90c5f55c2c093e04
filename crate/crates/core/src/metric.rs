//! Conformal metric densities `rho(w)|dw|`.
//!
//! A flat metric is stored through a holomorphic potential `H` (a finite
//! power series) with `log rho = Re H`. Then `lambda = (log rho)_w = H'/2`,
//! `v = Im H` is the harmonic conjugate of `log rho`, and the curvature
//! vanishes identically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{laplacian, ComplexField, GridSpec};

/// Largest |Re H| accepted before `exp` leaves the f64 range.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatMetric {
    pub id: String,
    /// `H(w) = sum_k coeffs[k] w^k`.
    pub coeffs: Vec<Complex64>,
}

impl FlatMetric {
    pub fn new(id: impl Into<String>, coeffs: Vec<Complex64>) -> Self {
        Self { id: id.into(), coeffs }
    }

    pub fn potential(&self, w: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * w + c)
    }

    pub fn potential_derivative(&self, w: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, c)| acc * w + c * k as f64)
    }

    pub fn log_rho(&self, w: Complex64) -> f64 {
        self.potential(w).re
    }

    pub fn rho(&self, w: Complex64) -> f64 {
        self.log_rho(w).exp()
    }

    pub fn lambda(&self, w: Complex64) -> Complex64 {
        self.potential_derivative(w) * 0.5
    }

    pub fn v(&self, w: Complex64) -> f64 {
        self.potential(w).im
    }
}

/// Non-flat fixtures with an explicit `log rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestPotential {
    /// `log rho = x^2`, curvature `-2 exp(-2 x^2)`.
    GaussX2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetric {
    pub id: String,
    pub potential: TestPotential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Metric {
    Flat(FlatMetric),
    Test(TestMetric),
}

pub const BUILTIN_NAMES: [&str; 4] = ["euclid", "exp_x", "exp_y", "gauss_nonflat"];

/// `euclid` (H = 0), `exp_x` (H = 2w), `exp_y` (H = -i w), `gauss_nonflat`
/// (log rho = x^2).
pub fn builtin_metric(name: &str) -> Result<Metric> {
    let c = Complex64::new;
    Ok(match name {
        "euclid" => Metric::Flat(FlatMetric::new("euclid", vec![])),
        "exp_x" => Metric::Flat(FlatMetric::new("exp_x", vec![c(0.0, 0.0), c(2.0, 0.0)])),
        "exp_y" => Metric::Flat(FlatMetric::new("exp_y", vec![c(0.0, 0.0), c(0.0, -1.0)])),
        "gauss_nonflat" => Metric::Test(TestMetric { id: "gauss_nonflat".into(), potential: TestPotential::GaussX2 }),
        other => return Err(LabError::UnknownMetric(other.to_string())),
    })
}

/// Flat metric whose `lambda` equals the entire function
/// `Theta(w) = sum_k theta[k] w^k`: `H = 2 * antiderivative(Theta)`.
pub fn metric_from_theta(theta: &[Complex64]) -> FlatMetric {
    let mut coeffs = vec![Complex64::new(0.0, 0.0)];
    coeffs.extend(theta.iter().enumerate().map(|(k, t)| t * (2.0 / (k + 1) as f64)));
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
        coeffs.pop();
    }
    if coeffs.len() == 1 {
        coeffs.clear();
    }
    FlatMetric::new("theta", coeffs)
}

impl Metric {
    pub fn id(&self) -> &str {
        match self {
            Metric::Flat(m) => &m.id,
            Metric::Test(m) => &m.id,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Metric::Flat(_))
    }

    pub fn as_flat(&self) -> Result<&FlatMetric> {
        match self {
            Metric::Flat(m) => Ok(m),
            Metric::Test(m) => Err(LabError::NotFlat(m.id.clone())),
        }
    }

    pub fn log_rho(&self, w: Complex64) -> f64 {
        match self {
            Metric::Flat(m) => m.log_rho(w),
            Metric::Test(m) => match m.potential {
                TestPotential::GaussX2 => w.re * w.re,
            },
        }
    }

    pub fn rho(&self, w: Complex64) -> f64 {
        self.log_rho(w).exp()
    }

    pub fn lambda(&self, w: Complex64) -> Complex64 {
        match self {
            Metric::Flat(m) => m.lambda(w),
            // (x^2)_w = x
            Metric::Test(m) => match m.potential {
                TestPotential::GaussX2 => Complex64::new(w.re, 0.0),
            },
        }
    }

    /// `lambda(w)` after checking that `log rho(w)` is inside the exp range.
    pub fn lambda_guarded(&self, w: Complex64) -> Result<Complex64> {
        let lr = self.log_rho(w);
        if !lr.is_finite() || lr.abs() > EXP_GUARD {
            return Err(LabError::MetricEvaluation(lr.abs()));
        }
        Ok(self.lambda(w))
    }

    pub fn v(&self, w: Complex64) -> Result<f64> {
        Ok(self.as_flat()?.v(w))
    }
}

pub fn eval_rho(metric: &Metric, w: Complex64) -> f64 {
    metric.rho(w)
}

pub fn eval_lambda(metric: &Metric, w: Complex64) -> Complex64 {
    metric.lambda(w)
}

pub fn eval_v(metric: &Metric, w: Complex64) -> Result<f64> {
    metric.v(w)
}

/// `log rho` sampled at the nodes of `grid`.
pub fn sample_log_rho(metric: &Metric, grid: GridSpec) -> ComplexField {
    ComplexField::from_real_fn(grid, |x, y| metric.log_rho(Complex64::new(x, y)))
}

/// `K = -rho^{-2} Delta_h log rho` on interior nodes.
pub fn gaussian_curvature(metric: &Metric, grid: GridSpec) -> Result<ComplexField> {
    let lap = laplacian(&sample_log_rho(metric, grid))?;
    Ok(lap.map_with_node(|w, l| Complex64::new(-(-2.0 * metric.log_rho(w)).exp() * l.re, 0.0)))
}
