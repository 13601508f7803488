//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A time index failed a range precondition.
    #[error("time index {tau} out of range: need lag order {order} <= tau < {len}")]
    TimeOutOfRange { tau: usize, order: usize, len: usize },

    /// A window push was not strictly newer than the retained times.
    #[error("window times must be strictly increasing: pushed {pushed}, newest retained {newest}")]
    NonMonotoneTime { pushed: usize, newest: usize },

    /// Two containers that must describe the same layout disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A scalar or shape parameter violates its documented bounds.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Input data contains a non-finite or otherwise unusable value.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A delimited input file failed to parse.
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    /// A column cannot be standardized because its sample variance is zero.
    #[error("column {label} is degenerate: zero sample variance")]
    DegenerateColumn { label: String },

    /// A requested range (burn-in, top-k, resampling span, ...) is empty or
    /// exceeds what the data provides.
    #[error("range error: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
