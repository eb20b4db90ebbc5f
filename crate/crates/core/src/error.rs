use thiserror::Error;

use crate::pruning::PruneReport;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "secular root {index} did not converge in ({lower:e}, {upper:e}) after {iterations} iterations"
    )]
    Convergence {
        index: usize,
        lower: f64,
        upper: f64,
        iterations: usize,
    },

    #[error("{what} is rank deficient at column {column} (relative size {relative:e})")]
    RankDeficient {
        what: String,
        column: usize,
        relative: f64,
    },

    #[error("observable {function} is not finite at sample {sample}")]
    Evaluation { function: String, sample: usize },

    #[error("consistency matrix has eigenvalue imaginary part {max_imag:e} above tolerance")]
    NumericalAsymmetry { max_imag: f64 },

    #[error("rank-one update produced eigenvalue {value:e} outside [0, 1]")]
    NumericalDrift { value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pruning aborted at dimension {}: {cause}", report.final_dim)]
    Aborted {
        report: Box<PruneReport>,
        cause: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
