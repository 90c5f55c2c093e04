//! Numerical laboratory for harmonic maps into flat conformal metrics.

pub mod audit;
pub mod beltrami;
pub mod closed_forms;
pub mod error;
pub mod field;
pub mod metric;
pub mod qc;
pub mod record;
pub mod teichmuller;
pub mod tension;

pub use error::{LabError, Result};
pub use field::{ComplexField, GridSpec};
pub use metric::{builtin_metric, FlatMetric, Metric};
