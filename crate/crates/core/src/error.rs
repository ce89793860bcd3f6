//! Error type shared by all simulator components.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("too few samples: need {needed}, have {available} ({context})")]
    InsufficientSamples {
        context: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("class {class} has insufficient supply: need {needed}, have {available}")]
    InsufficientClassSupply {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid cluster count {k}: {reason}")]
    InvalidClusterCount { k: usize, reason: String },

    #[error("all validator reports were filtered as outliers; round aborted")]
    AllValidatorsFiltered,

    #[error("unknown {family} '{name}'; known: {known}")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        known: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config file '{path}': {source}")]
    ConfigIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
