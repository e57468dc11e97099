use thiserror::Error;

use crate::propriety::ProprietyReport;

/// Errors raised anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular design: Gram pivot {pivot} fell below relative threshold ({ratio:.3e})")]
    SingularDesign { pivot: usize, ratio: f64 },

    #[error("matrix is not symmetric positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("posterior is improper under the flat prior ({})", .0.verdict)]
    Improper(Box<ProprietyReport>),

    #[error("weight blow-up at proposal {index}: residual norm {norm:.3e}, dataset at/near separation")]
    WeightBlowUp { index: usize, norm: f64 },

    #[error("hemisphere batch has no importance weights attached")]
    WeightsMissing,

    #[error("all importance weights are zero or non-finite")]
    DegenerateWeights,

    #[error("simplex exceeded {0} pivots")]
    LpCycling(usize),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
