//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by graph estimation, embedding, scoring, training, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input contained NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A bandwidth, rate, or other scalar parameter was outside its domain.
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A group index exceeded the number of groups.
    #[error("group {group} out of range for {n_groups} groups")]
    GroupOutOfRange { group: usize, n_groups: usize },

    /// A group has no observed contexts yet.
    #[error("group {0} has no observed contexts")]
    EmptyGroup(usize),

    /// A context vector was not unit-norm (or could not be normalized).
    #[error("degenerate context: {reason}")]
    DegenerateContext { reason: &'static str },

    /// A candidate list was empty.
    #[error("candidate list is empty")]
    EmptyCandidates,

    /// Training loss exceeded the divergence guard or became non-finite.
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    /// Clustering was asked for more clusters than points.
    #[error("cannot form {k} clusters from {n_points} points")]
    ClusterCount { k: usize, n_points: usize },

    /// A configuration value or combination was rejected.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Failure reading or writing experiment artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file had an unparseable row.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
