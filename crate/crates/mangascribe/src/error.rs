//! Crate-wide error type. Every fallible operation returns [`crate::Result`];
//! the CLI maps any error to a single stderr line and a nonzero exit.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    /// Document fails a structural invariant (bad bbox, duplicate id,
    /// unknown edge endpoint, out-of-range score, ...).
    #[error("invalid {kind}: {detail}")]
    Invalid { kind: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A pair appears in both the must-link and cannot-link closures.
    #[error("inconsistent constraints: {0}")]
    InconsistentConstraints(String),

    /// Brute-force guardrail: the enumeration space exceeds the cap.
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    /// Operation misuse: empty inputs, undefined metrics, infeasible requests.
    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn input(detail: impl Into<String>) -> Self {
        Error::InvalidInput(detail.into())
    }
}
