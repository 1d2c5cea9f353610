use std::path::PathBuf;

use thiserror::Error;

use crate::inversion::ReconstructionState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A file could not be decoded. `offset` is the byte position where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("json parse error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },

    /// Structurally valid input whose records fail validation.
    #[error("validation error: {message}")]
    Validation {
        message: String,
        records: Vec<usize>,
    },

    #[error("unsupported segmentation encoding (annotation {annotation_id}): only polygon lists are decoded")]
    UnsupportedSegmentation { annotation_id: u64 },

    #[error("target not found: label {0} is absent from the mask")]
    TargetNotFound(u32),

    #[error("no background available: the region covers the whole image")]
    NoBackground,

    #[error("stripes overlap: stride {stride} is smaller than band size {band}")]
    StripeOverlap { stride: usize, band: usize },

    #[error("empty application window: offset ({0}, {1}) leaves no pixel of the region")]
    EmptyWindow(i64, i64),

    #[error("non-finite gradient at iteration {iter}")]
    NonFinite {
        iter: usize,
        state: Box<ReconstructionState>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Index of the first offending record, when the error is tied to one.
    pub fn record(&self) -> Option<usize> {
        match self {
            Error::Validation { records, .. } => records.first().copied(),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
