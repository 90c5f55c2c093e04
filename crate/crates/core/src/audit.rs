//! Named residual checks against tolerances, for one sampled map.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::{inverse_beltrami_residual_with, nu_quasiregular_residual_with, Convention};
use crate::error::{LabError, Result};
use crate::field::{ComplexField, GridSpec};
use crate::qc::{
    arg_hopf_residual, beltrami_coefficient, holomorphy_residual, hopf, lemma1_residual, lemma2_residual,
    lemma3_residual, max_principle_scan, modulus_spread,
};
use crate::record::{MapKind, MapRecord};
use crate::tension::tension_residual;

/// Fraction of the grid the checks look at.
pub const AUDIT_WINDOW: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditTolerances {
    pub tension: f64,
    pub hopf: f64,
    pub lemma1: f64,
    pub lemma2: f64,
    pub lemma3: f64,
    pub arg_hopf: f64,
    pub spread: f64,
    pub inverse: f64,
    pub twist: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self {
            tension: 1e-2,
            hopf: 1e-2,
            lemma1: 1e-2,
            lemma2: 1e-2,
            lemma3: 1e-2,
            arg_hopf: 1e-2,
            spread: 1e-2,
            inverse: 1e-2,
            twist: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub residual: Option<f64>,
    pub grid_h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_ratio: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub map_id: String,
    pub checks: Vec<AuditCheck>,
    pub environment: BTreeMap<String, String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Outcome of one check before the verdict: a residual, not applicable, or
/// an error that counts as failure.
enum Outcome {
    Value(f64),
    NotApplicable(String),
    Failed(String),
}

fn outcome(r: Result<Option<f64>>, na: &str) -> Outcome {
    match r {
        Ok(Some(v)) => Outcome::Value(v),
        Ok(None) => Outcome::NotApplicable(na.into()),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

fn window(field: &ComplexField) -> Result<ComplexField> {
    field.central(AUDIT_WINDOW)
}

fn checks_for(record: &MapRecord, tol: &AuditTolerances) -> Result<Vec<(&'static str, f64, Outcome)>> {
    let f = window(&record.field)?;
    let metric = &record.metric;
    let mut out = Vec::new();
    match record.kind {
        MapKind::Map => {
            out.push(("tension", tol.tension, outcome(tension_residual(&f, metric).map(|t| Some(t.max_abs())), "")));
            out.push((
                "hopf_holomorphy",
                tol.hopf,
                outcome(hopf(&f, metric).and_then(|p| holomorphy_residual(&p.phi)).map(Some), ""),
            ));
            out.push(("lemma1", tol.lemma1, outcome(lemma1_residual(&f), "conformal map: mu vanishes")));
            out.push(("lemma2", tol.lemma2, outcome(lemma2_residual(&f, metric).map(Some), "")));
            let lemma3 = match lemma1_residual(&f) {
                Ok(None) => Ok(None),
                _ => lemma3_residual(&f, metric).map(|r| Some(r.total())),
            };
            out.push(("lemma3", tol.lemma3, outcome(lemma3, "conformal map: Phi vanishes")));
            out.push(("arg_hopf", tol.arg_hopf, outcome(arg_hopf_residual(&f), "conformal map: Phi vanishes")));
            out.push((
                "max_principle",
                0.0,
                outcome(max_principle_scan(&f).map(|r| Some((r.maxima.len() + r.minima.len()) as f64)), ""),
            ));
        }
        MapKind::Inverse => {
            let mu = beltrami_coefficient(&f);
            out.push((
                "inverse_equation",
                tol.inverse,
                outcome(mu.clone().and_then(|m| inverse_beltrami_residual_with(&m, metric, Convention::Harmonic)).map(|r| Some(r.max_abs())), ""),
            ));
            let twist = if metric.is_flat() {
                mu.clone().and_then(|m| nu_quasiregular_residual_with(&m, metric, Convention::Harmonic)).map(Some)
            } else {
                Ok(None)
            };
            out.push(("twist", tol.twist, outcome(twist, "metric is not flat")));
        }
    }
    if record.alpha.is_some() {
        out.push(("modulus_spread", tol.spread, outcome(beltrami_coefficient(&f).map(|m| Some(modulus_spread(&m))), "")));
    }
    Ok(out)
}

/// Runs every applicable check on the central part of `record`; with a
/// `refined` record (same map at half the spacing) each check also reports
/// the ratio of the two residuals.
pub fn audit_map(
    map_id: &str,
    record: &MapRecord,
    tol: &AuditTolerances,
    refined: Option<&MapRecord>,
) -> Result<AuditReport> {
    let grid = *record.field.grid();
    if let Some(r) = refined {
        if r.kind != record.kind {
            return Err(LabError::InvalidParameter("refined record is of a different kind".into()));
        }
    }
    let coarse = checks_for(record, tol)?;
    let fine = refined.map(|r| checks_for(r, tol)).transpose()?;
    let mut checks = Vec::new();
    for (k, (name, tolerance, result)) in coarse.into_iter().enumerate() {
        let ratio = fine.as_ref().and_then(|f| match (&result, &f[k].2) {
            (Outcome::Value(a), Outcome::Value(b)) if *b > 0.0 => Some(a / b),
            _ => None,
        });
        let (residual, verdict, note) = match result {
            Outcome::Value(v) => (Some(v), if v <= tolerance { Verdict::Pass } else { Verdict::Fail }, None),
            Outcome::NotApplicable(n) => (None, Verdict::NotApplicable, Some(n)),
            Outcome::Failed(e) => (None, Verdict::Fail, Some(e)),
        };
        checks.push(AuditCheck { name: name.into(), residual, grid_h: grid.h, refinement_ratio: ratio, tolerance, verdict, note });
    }
    Ok(AuditReport { map_id: map_id.into(), checks, environment: environment(record, &grid) })
}

fn environment(record: &MapRecord, grid: &GridSpec) -> BTreeMap<String, String> {
    let mut env = BTreeMap::new();
    env.insert("grid".into(), format!("{},{},{},{},{}", grid.x0, grid.y0, grid.nx, grid.ny, grid.h));
    env.insert("metric".into(), record.metric.id().into());
    env.insert("kind".into(), format!("{:?}", record.kind).to_lowercase());
    env.insert("window".into(), AUDIT_WINDOW.to_string());
    if let Some(a) = record.alpha {
        env.insert("alpha".into(), format_complex(a));
    }
    env
}

fn format_complex(z: Complex64) -> String {
    format!("{},{}", z.re, z.im)
}
