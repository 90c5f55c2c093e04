//! Flag value parsers and the named map fixtures.

use num_complex::Complex64;
use tensionlab::closed_forms::{example51_map, linear_map, peaked_control, tanh_strip_map, Example51Params, Example51Variant};
use tensionlab::metric::metric_from_theta;
use tensionlab::{builtin_metric, ComplexField, GridSpec, Metric};

use crate::CliError;

fn numbers(flag: &str, s: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(CliError::input(flag, format!("expected {n} comma-separated values, got `{s}`")));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| CliError::input(flag, format!("`{p}` is not a number"))))
        .collect()
}

fn count(flag: &str, x: f64) -> Result<usize, CliError> {
    if x.fract() != 0.0 || x < 0.0 || x > u32::MAX as f64 {
        return Err(CliError::input(flag, format!("`{x}` is not a node count")));
    }
    Ok(x as usize)
}

/// `X0,Y0,NX,NY,H`.
pub fn grid(s: &str) -> Result<GridSpec, CliError> {
    let v = numbers("grid", s, 5)?;
    GridSpec::new(v[0], v[1], count("grid", v[2])?, count("grid", v[3])?, v[4]).map_err(|e| CliError::input("grid", e))
}

/// `RE,IM`.
pub fn complex(flag: &str, s: &str) -> Result<Complex64, CliError> {
    let v = numbers(flag, s, 2)?;
    Ok(Complex64::new(v[0], v[1]))
}

/// `RE,IM;RE,IM;...` coefficients of `lambda` as a power series.
pub fn theta(s: &str) -> Result<Metric, CliError> {
    let coeffs = s.split(';').map(|t| complex("theta", t)).collect::<Result<Vec<_>, _>>()?;
    Ok(Metric::Flat(metric_from_theta(&coeffs)))
}

pub fn metric(name: Option<&str>, theta_spec: Option<&str>) -> Result<Option<Metric>, CliError> {
    match (name, theta_spec) {
        (Some(n), None) => builtin_metric(n).map(Some).map_err(|e| CliError::input("metric", e)),
        (None, Some(t)) => theta(t).map(Some),
        (None, None) => Ok(None),
        (Some(_), Some(_)) => Err(CliError::input("theta", "give either --metric or --theta, not both")),
    }
}

/// `A,B,N`.
pub fn xrange(s: &str) -> Result<(f64, f64, usize), CliError> {
    let v = numbers("xrange", s, 3)?;
    let n = count("xrange", v[2])?;
    if !(v[1] > v[0]) || n < 3 {
        return Err(CliError::input("xrange", "need A < B and at least 3 samples"));
    }
    Ok((v[0], v[1], n))
}

pub fn variant(s: &str) -> Result<Example51Variant, CliError> {
    match s {
        "paper" => Ok(Example51Variant::PaperLiteral),
        "corrected" => Ok(Example51Variant::Corrected),
        other => Err(CliError::input("variant", format!("expected `paper` or `corrected`, got `{other}`"))),
    }
}

/// A named closed-form map.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Identity,
    /// `a z + (1 - a) conj z`.
    Linear(Complex64),
    /// `x + log cosh(x - shift) + i y`, harmonic into `exp_x`.
    Tanh(f64),
    /// `z^2 + 3 z`.
    Conformal,
    /// `z + 0.3 exp(-|z|^2)`, not harmonic.
    Peaked,
    Example51(Example51Params),
}

impl Fixture {
    /// `identity`, `linear:RE,IM`, `tanh[:SHIFT]`, `conformal`, `peaked`,
    /// `example51:C[,paper|corrected]`.
    pub fn parse(flag: &str, s: &str) -> Result<Self, CliError> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let fixture = match (name, arg) {
            ("identity", None) => Fixture::Identity,
            ("conformal", None) => Fixture::Conformal,
            ("peaked", None) => Fixture::Peaked,
            ("linear", Some(a)) => Fixture::Linear(complex(flag, a)?),
            ("tanh", None) => Fixture::Tanh(0.0),
            ("tanh", Some(a)) => Fixture::Tanh(numbers(flag, a, 1)?[0]),
            ("example51", Some(a)) => {
                let (c, v) = a.split_once(',').unwrap_or((a, "paper"));
                let c = numbers(flag, c, 1)?[0];
                Fixture::Example51(Example51Params::new(c, variant(v)?).map_err(|e| CliError::input(flag, e))?)
            }
            _ => return Err(CliError::input(flag, format!("unknown fixture `{s}`"))),
        };
        Ok(fixture)
    }

    /// Metric the fixture is harmonic into (or meant for).
    pub fn default_metric(&self) -> Metric {
        let name = match self {
            Fixture::Tanh(_) | Fixture::Example51(_) => "exp_x",
            _ => "euclid",
        };
        builtin_metric(name).expect("built-in name")
    }

    pub fn sample(&self, flag: &str, grid: &GridSpec) -> Result<ComplexField, CliError> {
        let err = |e| CliError::input(flag, e);
        Ok(match self {
            Fixture::Identity => ComplexField::from_fn(*grid, |z| z),
            Fixture::Linear(a) => linear_map(*a).map_err(err)?.sample(grid),
            Fixture::Tanh(shift) => tanh_strip_map(*shift).sample(grid).map_err(err)?,
            Fixture::Conformal => ComplexField::from_fn(*grid, |z| z * z + 3.0 * z),
            Fixture::Peaked => ComplexField::from_fn(*grid, peaked_control),
            Fixture::Example51(p) => example51_map(grid, p).map_err(err)?.field,
        })
    }
}
