use thiserror::Error;

/// Every failure mode of the pipeline.
///
/// Numerical failures carry the offending numbers so that a report can be
/// written even when a stage does not certify.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected 3 roots of x -> S(x, g(x)), found {found} on [{lo}, {hi}]")]
    RootCount { found: usize, lo: f64, hi: f64 },
    #[error("fixed point {root} has derivative {slope} of the wrong sign")]
    Stability { root: f64, slope: f64 },
    #[error("{what} is not positive: min {min:e} at node {node}")]
    Positivity { what: &'static str, min: f64, node: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("{what} is not strictly increasing (min slope {min_slope:e} at node {node})")]
    Monotonicity { what: &'static str, min_slope: f64, node: usize },
    #[error("front left the tracking window at t = {t} (position {position})")]
    FrontLost { t: f64, position: f64 },
    #[error("denominator {value:e} too small in {what}")]
    Division { what: &'static str, value: f64 },
    #[error("gain is not convex-concave: F'' changes sign {changes} times")]
    ConvexConcave { changes: usize },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("normalization mismatch in {what}: {a} vs {b}")]
    Normalization { what: &'static str, a: f64, b: f64 },
    #[error("test function not negligible near the boundary: |h| = {value:e}")]
    Support { value: f64 },
    #[error("{what} appears unbounded: {detail}")]
    Unbounded { what: &'static str, detail: String },
    #[error("tail fit failed on the {side} side: {detail}")]
    TailFit { side: &'static str, detail: String },
    #[error("degenerate {what}: {value:e}")]
    Degenerate { what: &'static str, value: f64 },
    #[error("non-positive {what}: {value:e}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("certification failed: {detail}")]
    CertificationFailure { detail: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("outside the domain of validity: {0}")]
    Domain(String),
    #[error("solution blew up at t = {t}: |u| = {norm:e}")]
    Blowup { t: f64, norm: f64 },
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
