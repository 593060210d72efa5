use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design matrix is rank deficient (min/max diagonal ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid size: requested {requested} out of {available}")]
    InvalidSize { requested: usize, available: usize },

    #[error("subdata size k = {k} exceeds the number of rows n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("true active set is empty")]
    EmptyTruth,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}: no data rows")]
    EmptyFile(PathBuf),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
