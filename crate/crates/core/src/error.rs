use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field has {actual} values but the mesh has {expected} nodes")]
    MeshMismatch { expected: usize, actual: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("conjugate gradient stagnated after {iterations} iterations (relative residual {residual:e})")]
    IllConditioned { iterations: usize, residual: f64 },

    #[error("fixed-point state iteration did not converge in {iterations} iterations (relative change {change:e})")]
    StateNonConvergence { iterations: usize, change: f64 },

    #[error("state norm {norm:e} is below the zero-norm guard {guard:e}")]
    DegenerateState { norm: f64, guard: f64 },

    #[error("state not converged at optimizer iteration {iteration}")]
    StateNotConverged { iteration: usize },

    #[error("optimizer stalled at iteration {iteration}: {reason}")]
    Stalled { iteration: usize, reason: String },

    #[error("gradient check failed: max relative error {max_error:e} exceeds {threshold:e}")]
    GradientMismatch { max_error: f64, threshold: f64 },

    #[error("symmetrization check failed: {0}")]
    SymmetrizationFailed(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMesh(_) => "invalid-mesh",
            Error::MeshMismatch { .. } => "mesh-mismatch",
            Error::NonConvergence { .. } => "non-convergence",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::StateNonConvergence { .. } => "state-non-convergence",
            Error::DegenerateState { .. } => "degenerate-state",
            Error::StateNotConverged { .. } => "state-not-converged",
            Error::Stalled { .. } => "stalled",
            Error::GradientMismatch { .. } => "gradient-mismatch",
            Error::SymmetrizationFailed(_) => "symmetrization-failed",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the CLI. Each error kind maps to its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Validation { .. } => 3,
            Error::Io { .. } => 4,
            Error::InvalidMesh(_) | Error::MeshMismatch { .. } => 5,
            Error::NonConvergence { .. } => 6,
            Error::IllConditioned { .. } => 7,
            Error::StateNonConvergence { .. } => 8,
            Error::DegenerateState { .. } => 9,
            Error::StateNotConverged { .. } => 10,
            Error::Stalled { .. } => 11,
            Error::GradientMismatch { .. } => 12,
            Error::SymmetrizationFailed(_) => 13,
        }
    }
}
