//! Error type shared across the library.

use thiserror::Error;

/// Errors reported by library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A distribution specification failed validation.
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    /// An experiment or model configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The variance estimate of the test statistic is zero, so the
    /// studentized statistic is undefined.
    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    /// The regression design matrix is numerically rank deficient.
    #[error("rank-deficient design: columns {columns:?} are linearly dependent")]
    RankDeficientDesign { columns: Vec<usize> },

    /// A numerical estimation step failed outright (as opposed to
    /// terminating without meeting its tolerance, which is flagged).
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
