use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed tensor header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: malformed manifest: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("video {video_id:?} references unknown class {class_id:?}")]
    UnknownClass { video_id: String, class_id: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("{0}")]
    Invalid(String),

    #[error("seen and unseen classes overlap: {}", .classes.join(", "))]
    SplitOverlap { classes: Vec<String> },

    #[error("split references classes absent from the manifest: {}", .classes.join(", "))]
    SplitUnknownClass { classes: Vec<String> },

    #[error("split has an empty {side} side")]
    SplitEmptySide { side: &'static str },

    #[error("degenerate embedding ({context}): norm below 1e-12")]
    DegenerateEmbedding { context: String },

    #[error(
        "epoch {epoch}, {}: {source}",
        .batch.map_or_else(|| "validation".to_string(), |b| format!("batch {b}"))
    )]
    Training {
        epoch: usize,
        /// `None` when the failure happened during the validation pass.
        batch: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::DegenerateEmbedding { .. } | Error::Numerical(_) => ErrorKind::Numerical,
            Error::Training { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
