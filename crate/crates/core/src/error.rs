use thiserror::Error;

/// Errors raised by the samplers, integrators and estimators of this crate.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("parameter `{name}` = {value} outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("integration failed at step {step}: non-finite state")]
    NonFinite { step: usize },
    #[error("{failed} of {total} paths failed; first failure on path {path}: {source}")]
    Ensemble {
        failed: usize,
        total: usize,
        path: usize,
        #[source]
        source: Box<LabError>,
    },
    #[error("quadrature did not converge: error {error:e} at x = {x}")]
    Quadrature { x: f64, error: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("density not normalized: total mass {mass}")]
    Unnormalized { mass: f64 },
    #[error("stencil at x = {x} leaves the grid")]
    Stencil { x: f64 },
    #[error("integrand at t_max = {t_max} is {value:e}, above tolerance")]
    TailTolerance { t_max: f64, value: f64 },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain(name: &'static str, value: f64, range: &'static str) -> LabError {
    LabError::Domain { name, value, range }
}
