use std::path::PathBuf;

/// Errors produced by the recommendation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("i/o error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no parseable records in input")]
    EmptyInput,

    #[error("bad input format: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("events are not sorted by (user, timestamp)")]
    UnsortedEvents,

    #[error("corpus is empty after applying min_count = {0}")]
    EmptyCorpus(u32),

    #[error("vocabulary too small to train (|V| = {0}, need at least 2)")]
    UntrainableCorpus(usize),

    #[error("corpus yields no training pairs")]
    NoTrainingPairs,

    #[error("loss is undefined on an empty pair set")]
    EmptyPairs,

    #[error("unknown tag: {0:?}")]
    UnknownTag(String),

    #[error("user {0} has no training data")]
    ColdUser(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged (non-finite value) at epoch {0}")]
    Divergence(usize),
}
