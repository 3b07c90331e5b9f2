use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Dims;

/// Shape and contract violations raised by tensor operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: empty spatial extent {dims}")]
    EmptySpatial { op: &'static str, dims: Dims },
    #[error("{op}: data length {len} does not match dims {dims}")]
    BadLength { op: &'static str, dims: Dims, len: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

impl TensorError {
    pub(crate) fn mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        TensorError::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

/// Malformed or inconsistent configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config key `{key}`: invalid value `{value}` ({reason})")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Checkpoint decoding and validation failures.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload while reading {context}")]
    Truncated { context: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint tensor mismatch at `{name}`: {detail}")]
    Mismatch { name: String, detail: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Image and dataset ingestion failures.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("missing counterpart for `{id}` in {dir}")]
    Orphan { id: String, dir: PathBuf },
    #[error("directory not found: {0}")]
    MissingDir(PathBuf),
    #[error("unmatched ids: {0:?}")]
    Unmatched(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at epoch {epoch}, iteration {iter}: {reason}")]
    Divergence {
        epoch: usize,
        iter: usize,
        reason: String,
    },
    #[error("non-finite gradient for `{name}`")]
    NonFiniteGradient { name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
