use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn shape(s: &(usize, usize)) -> String {
    format!("{}x{}", s.0, s.1)
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {} and {}", shape(.left), shape(.right))]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("cannot normalize a vector of norm {norm:e} (dead embedding?)")]
    DegenerateVector { norm: f64 },

    #[error("non-finite gradient in parameter `{param}`")]
    Divergence { param: String },

    #[error("training diverged at step {step}: non-finite loss")]
    NonFiniteLoss { step: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot split {0} users three ways")]
    TooFewUsers(usize),

    #[error("item index {index} outside vocabulary of size {size}")]
    Vocabulary { index: usize, size: usize },

    #[error("target item {0} appears among the sampled negatives")]
    TargetInNegatives(usize),

    #[error("cannot draw {requested} negatives from a vocabulary of {vocab}")]
    TooManyNegatives { requested: usize, vocab: usize },

    #[error("sequence of length {len} is too short (need at least {min})")]
    SequenceTooShort { len: usize, min: usize },

    #[error("replace rate {0} outside (0, 1]")]
    InvalidRate(f64),

    #[error("concept memory holds {expected} concepts, got {got}")]
    MemoryKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cannot retrieve {requested} items: only {available} candidates")]
    TooManyRequested { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
