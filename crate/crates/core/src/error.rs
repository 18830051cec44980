use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A single input row could not be parsed. `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("date range not covered: {0}")]
    RangeNotCovered(String),

    /// An iterative estimator ran out of iterations. Carries the best point seen.
    #[error("no convergence after {iterations} iterations (best objective {best_objective})")]
    NoConvergence {
        iterations: usize,
        best_objective: f64,
        best_params: Vec<f64>,
    },

    /// Estimated ARMA polynomial has a root on or inside the unit circle.
    #[error("estimate on the stationarity/invertibility boundary: {0}")]
    Boundary(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
