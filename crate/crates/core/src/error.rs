use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("softmax row {row} has no unmasked entry")]
    FullyMaskedRow { row: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("node {node} does not require a gradient")]
    DetachedLeaf { node: usize },
    #[error("label {label} at frame {frame} is outside [0, {classes})")]
    LabelOutOfRange {
        frame: usize,
        label: usize,
        classes: usize,
    },
    #[error("segments {prev:?} and {next:?} leave a gap at frame {}", .prev.1 + 1)]
    SegmentGap {
        prev: (usize, usize),
        next: (usize, usize),
    },
    #[error("segments {prev:?} and {next:?} overlap")]
    SegmentOverlap {
        prev: (usize, usize),
        next: (usize, usize),
    },
    #[error("invalid segment list: {0}")]
    InvalidSegments(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite {component} loss at epoch {epoch}, sequence {sequence}")]
    NonFiniteLoss {
        epoch: usize,
        component: &'static str,
        sequence: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from invalid user input rather than an
    /// internal failure. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::NonFiniteLoss { .. } => false,
            _ => true,
        }
    }
}
