use thiserror::Error;

#[derive(Debug, Error)]
pub enum OslabError {
    #[error("matrix is not symmetric: max |A_ij - A_ji| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigenvalue {eigenvalue} lies outside the domain {domain} of `{function}`")]
    OutsideDomain {
        function: String,
        eigenvalue: f64,
        domain: String,
    },

    #[error("`{function}` provides derivatives up to order {max_order}, order {requested} requested")]
    OrderTooHigh {
        function: String,
        max_order: usize,
        requested: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown builtin function `{0}`")]
    UnknownFunction(String),

    #[error("quadrature did not converge: last two values {previous} and {last}")]
    QuadratureNotConverged { previous: f64, last: f64 },

    #[error("nonnegative least squares hit the iteration cap ({iterations}); residual trace {residuals:?}")]
    NnlsNotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("domain violation at t = {t}: {reason}")]
    DomainViolation { t: f64, reason: String },

    #[error("failed to parse matrix: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = OslabError> = std::result::Result<T, E>;
