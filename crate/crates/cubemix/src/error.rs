//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front-ends to map errors to exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or misuse of an API contract.
    Config,
    /// Dataset or artifact I/O problems.
    Data,
    /// Non-finite values, degenerate statistics, aborted optimization.
    Numeric,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape mismatch between operands.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation produced NaN or infinity.
    #[error("{op} produced non-finite values")]
    NonFinite { op: &'static str },

    /// Misuse of the gradient tape.
    #[error("tape: {0}")]
    Tape(&'static str),

    /// Invalid model, training, or run configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset problems: missing files, malformed payloads, bad manifests.
    #[error("dataset error ({}): {detail}", .id.as_deref().unwrap_or("-"))]
    Data { id: Option<String>, detail: String },

    /// Filesystem failure while reading or writing artifacts.
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A metric or loss hit a mathematically undefined case.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training aborted on a non-finite loss or update.
    #[error("numeric abort at epoch {epoch}{}: {detail}", .batch.map(|b| format!(", batch {b}")).unwrap_or_default())]
    NumericAbort {
        epoch: usize,
        batch: Option<usize>,
        detail: String,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }

    pub fn data(id: Option<&str>, detail: impl Into<String>) -> Self {
        Error::Data {
            id: id.map(str::to_owned),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape { .. } | Error::Config(_) => ErrorClass::Config,
            Error::Data { .. } | Error::Io { .. } => ErrorClass::Data,
            Error::NonFinite { .. }
            | Error::Tape(_)
            | Error::Degenerate(_)
            | Error::NumericAbort { .. } => ErrorClass::Numeric,
        }
    }
}
