//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no path from {origin} to {destination}")]
    NoPath { origin: String, destination: String },

    #[error("line {line} has no segment {from} -> {to}")]
    MissingRunTime {
        line: String,
        from: String,
        to: String,
    },

    #[error("cannot compute map distance: {0}")]
    MissingGeometry(String),

    #[error("non-finite utility for path {index}")]
    NonFiniteUtility { index: usize },

    #[error("histogram bins differ: {0}")]
    BinMismatch(String),

    #[error("inconsistent simulator state: {0}")]
    InconsistentState(String),

    #[error("unreachable OD for passenger {passenger}: {origin} -> {destination}")]
    UnreachableOd {
        passenger: u64,
        origin: String,
        destination: String,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid timetable: {0}")]
    InvalidTimetable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("surrogate model is degenerate: {0}")]
    SurrogateDegenerate(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error is a configuration/validation problem (as opposed
    /// to a runtime failure). The CLI maps this to its exit-code contract.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidNetwork(_)
                | Error::InvalidTimetable(_)
                | Error::Parse { .. }
                | Error::File { .. }
        )
    }
}
