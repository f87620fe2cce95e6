use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the fitting, evaluation and persistence layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },

    #[error("split produced an empty training set")]
    DegenerateSplit,

    #[error("partition polynomial is constant over the data")]
    DegeneratePartition,

    #[error("sparse fit stalled: every candidate monomial was rejected")]
    FittingStalled,

    #[error("coverage failure: {uncovered} of {total} samples uncovered at threshold {threshold}")]
    CoverageFailure {
        uncovered: usize,
        total: usize,
        threshold: f64,
    },

    #[error("normalization undefined: reference values have zero mean magnitude")]
    UndefinedNormalization,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the input data or files rather than
    /// by a fitting procedure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::DegeneratePartition | Error::FittingStalled | Error::CoverageFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
