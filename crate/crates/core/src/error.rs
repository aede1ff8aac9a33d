use thiserror::Error;

/// Errors raised by the estimators and their numerical sub-problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("potential is not convex: {0}")]
    NotConvex(String),

    #[error("potential is not strongly convex (certified alpha = {alpha:e}); conjugation requires alpha > 0")]
    NotStronglyConvex { alpha: f64 },

    #[error("conjugate oracle did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("conjugate oracle failed at query {index}: {source}")]
    BatchPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("matrix is rank deficient (smallest eigenvalue {min_eigenvalue:e}); consider a ridge regularization")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::NotConvex(_)
            | Error::NotStronglyConvex { .. } => ErrorClass::Usage,
            Error::Convergence { .. } | Error::RankDeficient { .. } => ErrorClass::Numerical,
            Error::BatchPoint { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
            // Malformed CSV content is a user error; unreadable files are I/O.
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => ErrorClass::Io,
                _ => ErrorClass::Usage,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
