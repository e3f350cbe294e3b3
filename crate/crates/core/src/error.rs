//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector that must carry direction information is (numerically) zero
    /// or collinear with its partner.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Class counts below 3 are rejected; the symmetric layout is only
    /// defined for n >= 3.
    #[error("invalid class count {0}: need n >= 3")]
    InvalidClassCount(usize),

    /// The analysis plane does not contain the summation vector it is
    /// required to pass through.
    #[error("plane misses the summation vector (residual {0:.3e})")]
    PlaneMissesSum(f64),

    /// An input row with (numerically) zero norm cannot be normalized.
    #[error("zero-norm input row {0}")]
    ZeroNormInput(usize),

    /// The sampled values are constant; there is no extremum to locate.
    #[error("no extremum found: values are constant within 1e-14")]
    NoExtremumFound,

    /// A parameter violated its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A binary input file is malformed (bad magic, truncated payload, ...).
    #[error("format error: {0}")]
    FormatError(String),

    /// Image and label files disagree on the number of records.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
