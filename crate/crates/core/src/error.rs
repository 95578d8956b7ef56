//! Error type shared across the pipeline.

use thiserror::Error;

/// Everything that can go wrong between loading a CSV and writing a report.
///
/// `NoAnomaly` is split out because callers treat it as a distinct outcome
/// (the CLI maps it to its own exit code) rather than a failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed input data: ragged CSV rows, non-numeric cells, duplicate
    /// or empty metric names, non-finite values.
    #[error("data format: {0}")]
    DataFormat(String),

    /// A precondition on an operation's arguments failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Domain knowledge that contradicts itself or the data.
    #[error("domain knowledge: {0}")]
    Knowledge(String),

    /// An edge insertion would close an instantaneous cycle.
    #[error("cycle: adding {from} -> {to} (lag 0) would create an instantaneous cycle")]
    Cycle { from: String, to: String },

    /// A named metric is not part of the dataset or graph.
    #[error("unknown metric: {0}")]
    UnknownMetric(String),

    /// Too few samples for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// No span of the target series breaches the detection threshold.
    #[error("no anomaly detected in the target series")]
    NoAnomaly,

    /// The simulated system diverged (bad weights or topology).
    #[error("simulation unstable: {0}")]
    Unstable(String),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::DataFormat(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
