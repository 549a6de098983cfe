use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    Shape {
        layer: String,
        kind: &'static str,
        detail: String,
    },

    #[error("incompatible architecture: {detail}\nshape trace:\n{trace}")]
    Architecture { detail: String, trace: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite loss during epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{0}")]
    Unsupported(String),

    #[error("oracle error: {message} (raw reply: {raw:?})")]
    Oracle { message: String, raw: String },

    #[error("probe for token {token} failed: {source}")]
    ProbeFailed {
        token: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stale perturbation: {0}")]
    StaleAnchor(String),

    #[error("no HTP table for target class `{0}`")]
    MissingHtps(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("truncated {0}")]
    Truncated(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
