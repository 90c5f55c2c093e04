use thiserror::Error;

use crate::tension::SolveReport;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, Error)]
pub enum LabError {
    #[error("grid-too-small: need at least 3x3 nodes, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("invalid-grid: {0}")]
    InvalidGrid(String),
    #[error("no-valid-interior: every interior node is masked")]
    NoValidInterior,
    #[error("masked-node: sample at ({re}, {im}) touches a masked node")]
    MaskedNode { re: f64, im: f64 },
    #[error("irregular-mask: valid nodes do not form a rectangle")]
    IrregularMask,
    #[error("out-of-domain: point ({re}, {im}) lies outside the grid rectangle")]
    OutOfDomain { re: f64, im: f64 },
    #[error("not-harmonic: discrete Laplacian residual {residual:.3e} exceeds {threshold:.3e}")]
    NotHarmonic { residual: f64, threshold: f64 },
    #[error("unknown-name: no built-in metric called `{0}`")]
    UnknownMetric(String),
    #[error("not-flat: metric `{0}` has no global harmonic conjugate")]
    NotFlat(String),
    #[error("did-not-converge after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    DidNotConverge(Box<SolveReport>),
    #[error("metric-evaluation-failure: |Re H| = {0:.3e} exceeds the exp range")]
    MetricEvaluation(f64),
    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),
    #[error("ellipticity-violation: sup |mu| = {0} is not below 1")]
    Ellipticity(f64),
    #[error("alpha-out-of-disk: |alpha| = {0} >= 1")]
    AlphaOutOfDisk(f64),
    #[error("cg-stagnation after {iterations} iterations (relative residual {residual:.3e})")]
    CgStagnation { iterations: usize, residual: f64 },
    #[error("constraint-outside-grid: ({re}, {im})")]
    ConstraintOutsideGrid { re: f64, im: f64 },
    #[error("not-injective-seed: Newton failed for {failed} of {covered} covered targets")]
    NotInjectiveSeed { failed: usize, covered: usize },
    #[error("degenerate-jacobian: {0}")]
    DegenerateJacobian(String),
    #[error("all-degenerate: every node was masked")]
    AllDegenerate,
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("orientation-violation: |a| = {a_abs} does not exceed |1 - a| = {b_abs}")]
    OrientationViolation { a_abs: f64, b_abs: f64 },
    #[error("domain-includes-degeneracy: rectangle reaches x <= {0}")]
    DomainIncludesDegeneracy(f64),
    #[error("quadrature-failure on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },
    #[error("grid-mismatch")]
    GridMismatch,
}
