//! A sampled map together with the data needed to audit it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::EntireFamilyMember;
use crate::field::ComplexField;
use crate::metric::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// A (candidate) harmonic map `f` into the metric.
    #[default]
    Map,
    /// The inverse `g = f^{-1}`, sampled on the target plane.
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapRecord {
    pub field: ComplexField,
    pub metric: Metric,
    pub kind: MapKind,
    /// Family parameter, when the map was constructed from one.
    pub alpha: Option<Complex64>,
    /// Two-point normalisation `(point, value)` applied to the map.
    pub normalization: Option<[(Complex64, Complex64); 2]>,
}

impl MapRecord {
    pub fn new(field: ComplexField, metric: Metric) -> Self {
        Self { field, metric, kind: MapKind::Map, alpha: None, normalization: None }
    }

    pub fn inverse(field: ComplexField, metric: Metric) -> Self {
        Self { kind: MapKind::Inverse, ..Self::new(field, metric) }
    }

    pub fn with_alpha(mut self, alpha: Complex64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// `(f, g)` records of a constructed family member; both are normalised
    /// by `0 -> 0`, `1 -> 1`.
    pub fn from_member(member: &EntireFamilyMember, metric: &Metric) -> (Self, Self) {
        let pins = Some([(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))]);
        let f = Self { normalization: pins, ..Self::new(member.f.clone(), metric.clone()).with_alpha(member.alpha) };
        let g = Self { normalization: pins, ..Self::inverse(member.g.clone(), metric.clone()).with_alpha(member.alpha) };
        (f, g)
    }
}
