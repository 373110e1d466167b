use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A covariance or correlation matrix is not usable (not symmetric,
    /// not positive definite, wrong shape).
    #[error("matrix error: {0}")]
    Matrix(String),

    /// Inputs are structurally invalid (mismatched lengths, empty grids, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Observed data cannot be summarized (zero variance, too few pairs).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// An iterative solver hit its iteration cap.
    #[error("{solver} did not converge after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        last: f64,
        residual: f64,
        /// Per-iteration diagnostics, when the solver keeps them.
        trace: Vec<String>,
    },

    /// A calibration-table lookup fell outside the tabulated grid.
    #[error("({sigma1}, {nu2}) lies outside the calibration table grid; use the quadrature strategy instead")]
    Extrapolation { sigma1: f64, nu2: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Matrix(_) => "matrix",
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateData(_) => "degenerate_data",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Extrapolation { .. } => "extrapolation",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
