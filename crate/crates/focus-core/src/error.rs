//! Crate-wide error type.
//!
//! Every failure carries a stable category name (see [`Error::category`])
//! so the command-line frontend can emit machine-parsable one-line errors
//! and map categories to exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad field values, inconsistent sections,
    /// unknown keys, mismatched environments.
    #[error("config: {0}")]
    Config(String),

    /// Shape mismatch between tensors, states, or datasets.
    #[error("shape: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A numerical invariant broke (non-finite value, degenerate scale).
    #[error("numeric: {0}")]
    Numeric(String),

    /// Dataset-level problems: empty sets, mixed variants, bad labels.
    #[error("data: {0}")]
    Data(String),

    /// Benchmark generation could not satisfy the requested composition.
    #[error("benchmark: {0}")]
    Benchmark(String),

    /// Checkpoint parsing/versioning failures.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serde: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable lowercase category label for machine-readable error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::Numeric(_) => "numeric",
            Error::Data(_) => "data",
            Error::Benchmark(_) => "benchmark",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Serde(_) => "serde",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code the CLI maps this error to.
    ///
    /// 2 is reserved for usage errors (argument parsing), so config errors
    /// take 3 and everything else groups by how actionable it is.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io(_) | Error::Serde(_) | Error::Csv(_) | Error::Checkpoint(_) => 4,
            Error::Data(_) | Error::Benchmark(_) => 5,
            Error::Numeric(_) | Error::Shape { .. } => 6,
        }
    }
}
