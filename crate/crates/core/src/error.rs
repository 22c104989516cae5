use thiserror::Error;

use crate::screening::ScreeningTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input, schema or configuration.
    Validation,
    /// The numerics failed (singular matrix, divergence, no eigengap).
    Numerical,
    /// Screening did not reach its target dimension.
    IterationLimit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid simulation spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("covariance is singular or near-singular ({0}); use Ledoit-Wolf shrinkage")]
    Rank(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no eigengap exceeds tau = {tau}")]
    NoGap { tau: f64 },

    #[error("screening stopped after {rounds} rounds with {remaining} features left")]
    IterationLimit {
        rounds: usize,
        remaining: usize,
        trace: Box<ScreeningTrace>,
    },

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("training did not reduce the loss (initial {initial}, final {last})")]
    NotImproved { initial: f64, last: f64 },

    #[error("refit for s = {s} failed: {source}")]
    Refit {
        s: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Rank(_)
            | Error::Degenerate(_)
            | Error::NoGap { .. }
            | Error::Divergence { .. }
            | Error::NotImproved { .. } => ErrorKind::Numerical,
            Error::IterationLimit { .. } => ErrorKind::IterationLimit,
            Error::Refit { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            found,
        }
    }
}
