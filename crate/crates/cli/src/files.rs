//! On-disk formats: map records and audit reports as JSON.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use tensionlab::record::{MapKind, MapRecord};
use tensionlab::{builtin_metric, ComplexField, FlatMetric, GridSpec, Metric};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub id: String,
    /// Coefficients of the potential `H`, `log rho = Re H`.
    pub coefficients: Vec<[f64; 2]>,
    pub flat: bool,
}

/// How a record was produced, so `audit --refine` can regenerate it at
/// half the spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Source {
    Fixture { fixture: String },
    Solve { boundary: String, tol: f64, max_iters: usize },
    Construct { alpha: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRecordFile {
    pub format_version: u32,
    pub grid: GridDescriptor,
    pub metric: MetricDescriptor,
    #[serde(default)]
    pub kind: MapKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<[[[f64; 2]; 2]; 2]>,
    pub values: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn complex(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub fn grid_descriptor(g: &GridSpec) -> GridDescriptor {
    GridDescriptor { x0: g.x0, y0: g.y0, nx: g.nx, ny: g.ny, h: g.h }
}

pub fn metric_descriptor(m: &Metric) -> MetricDescriptor {
    match m {
        Metric::Flat(f) => {
            MetricDescriptor { id: f.id.clone(), coefficients: f.coeffs.iter().copied().map(pair).collect(), flat: true }
        }
        Metric::Test(t) => MetricDescriptor { id: t.id.clone(), coefficients: vec![], flat: false },
    }
}

/// Flat descriptors carry their own potential; non-flat ones must name a
/// built-in fixture.
pub fn resolve_metric(d: &MetricDescriptor) -> Result<Metric, CliError> {
    if d.flat {
        return Ok(Metric::Flat(FlatMetric::new(d.id.clone(), d.coefficients.iter().copied().map(complex).collect())));
    }
    match builtin_metric(&d.id) {
        Ok(m) if !m.is_flat() => Ok(m),
        _ => Err(CliError::input("metric", format!("unknown non-flat metric `{}`", d.id))),
    }
}

impl MapRecordFile {
    pub fn from_record(record: &MapRecord, source: Option<Source>) -> Self {
        let field = &record.field;
        let mask = (!field.is_fully_valid()).then(|| field.validity().to_vec());
        Self {
            format_version: FORMAT_VERSION,
            grid: grid_descriptor(field.grid()),
            metric: metric_descriptor(&record.metric),
            kind: record.kind,
            alpha: record.alpha.map(pair),
            normalization: record.normalization.map(|n| n.map(|(p, v)| [pair(p), pair(v)])),
            values: field.values().iter().copied().map(pair).collect(),
            mask,
            source,
        }
    }

    pub fn to_record(&self) -> Result<MapRecord, CliError> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::input("format_version", format!("unsupported version {}", self.format_version)));
        }
        let g = &self.grid;
        let grid = GridSpec::new(g.x0, g.y0, g.nx, g.ny, g.h).map_err(|e| CliError::input("grid", e))?;
        let values: Vec<Complex64> = self.values.iter().copied().map(complex).collect();
        let mask = self.mask.clone().unwrap_or_else(|| vec![true; values.len()]);
        let field = ComplexField::from_values_masked(grid, values, mask).map_err(|e| CliError::input("values", e))?;
        Ok(MapRecord {
            field,
            metric: resolve_metric(&self.metric)?,
            kind: self.kind,
            alpha: self.alpha.map(complex),
            normalization: self.normalization.map(|n| n.map(|[p, v]| (complex(p), complex(v)))),
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input("in", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input("in", format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}
