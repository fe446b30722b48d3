use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the captioning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed on-disk data. `offset` is a byte offset for binary files and a
    /// 1-based line number for text files.
    #[error("{path}: {kind} at offset {offset}: {detail}")]
    Format {
        path: PathBuf,
        kind: FormatErrorKind,
        offset: u64,
        detail: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: non-finite value in parameter {param}")]
    Numeric { param: String },

    #[error("reward failed for image {image_id}: {reason}")]
    Reward { image_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    BadVersion,
    Truncated,
    ShapeMismatch,
    Malformed,
}

impl std::fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FormatErrorKind::BadMagic => "bad magic",
            FormatErrorKind::BadVersion => "unsupported version",
            FormatErrorKind::Truncated => "truncated input",
            FormatErrorKind::ShapeMismatch => "shape mismatch",
            FormatErrorKind::Malformed => "malformed record",
        };
        f.write_str(s)
    }
}

impl Error {
    pub fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
