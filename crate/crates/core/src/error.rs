use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::SentimentLabel;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("document {id:?} has no label")]
    Unlabeled { id: String },

    #[error("class {label} has {count} document(s); stratified split needs at least 2")]
    ClassTooSmall { label: SentimentLabel, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("language identification failed for document {id:?}: {message}")]
    Predicate { id: String, message: String },

    #[error("no unit has two or more annotations; agreement is not computable")]
    NoPairableUnits,

    #[error("no aggregated label for document {0:?}")]
    MissingAggregation(String),

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value during {stage}")]
    NonFinite { stage: String },

    #[error("insufficient silver data: {}", format_shortfalls(.0))]
    Shortfall(Vec<Shortfall>),

    #[error("gold alone exceeds the target for {label}: {gold} > {target}")]
    GoldExceedsTarget {
        label: SentimentLabel,
        gold: usize,
        target: usize,
    },

    #[error("client error for document {id:?} at {endpoint}: {message}")]
    Client {
        id: String,
        endpoint: String,
        message: String,
    },

    #[error("model file: {0}")]
    Model(String),

    #[error("stage {stage} failed ({config}): {source}")]
    Stage {
        stage: String,
        config: String,
        #[source]
        source: Box<Error>,
    },
}

/// A per-class deficit reported when a balancing or selection target cannot be met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub label: SentimentLabel,
    /// What was being counted: "documents" or "emoji documents".
    pub what: &'static str,
    pub needed: usize,
    pub available: usize,
}

impl Shortfall {
    pub fn deficit(&self) -> usize {
        self.needed - self.available
    }
}

fn format_shortfalls(items: &[Shortfall]) -> String {
    items
        .iter()
        .map(|s| {
            format!(
                "{} short by {} {} (needed {}, available {})",
                s.label,
                s.deficit(),
                s.what,
                s.needed,
                s.available
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str, config: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            config: config.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures of a remote translator or teacher.
    pub fn is_client_error(&self) -> bool {
        match self {
            Error::Client { .. } => true,
            Error::Stage { source, .. } => source.is_client_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
