//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: usage and
//! contract violations, data/IO problems, and numerical failures.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (bad spec, bad enum
    /// combination, request outside the supported domain).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor shapes are incompatible for the requested graph operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An API contract was broken (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Attribution was requested for a class that failed the prediction gate.
    #[error("rejected request: {0}")]
    RejectedRequest(String),

    /// A numerical failure: NaN/Inf during training or attribution.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed on-disk artifact (manifest, checkpoint index, dump sidecar).
    #[error("malformed file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Exit-code category used by the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Contract(_) | Error::RejectedRequest(_) => 1,
            Error::Io { .. } | Error::Malformed { .. } => 2,
            Error::ShapeMismatch { .. } | Error::Numerical(_) => 3,
        }
    }
}
