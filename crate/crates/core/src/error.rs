use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} ({op}): expected shape {expected}, got {actual}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("input `{0}` is not bound")]
    Unbound(String),

    #[error("node {node} ({op}) produced a non-finite value")]
    NonFinite { node: usize, op: &'static str },

    #[error("loss node {node} has shape {rows}x{cols}; a 1x1 scalar is required")]
    NotScalar { node: usize, rows: usize, cols: usize },

    #[error("forward pass covers {evaluated} of {nodes} tape nodes; run forward first")]
    NotEvaluated { evaluated: usize, nodes: usize },

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("parameter `{name}`: shape {expected} does not match gradient shape {actual}")]
    ParamShape {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("finite-difference probe of `{name}`[{index}] gave a non-finite loss")]
    NonFiniteProbe { name: String, index: usize },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("{0} batch is empty")]
    EmptyBatch(&'static str),

    #[error("smoothness loss needs two independent noise draws per target row")]
    MissingSecondDraw,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid shift: {0}")]
    InvalidShift(String),

    #[error("IDX: bad magic {0:#010x}")]
    IdxMagic(u32),

    #[error("IDX: unsupported type {magic:#06x}, expected {expected:#06x}")]
    IdxUnsupported { magic: u32, expected: u32 },

    #[error("IDX: payload truncated, expected {expected} bytes, found {found}")]
    IdxTruncated { expected: usize, found: usize },

    #[error("IDX: dimensions overflow the address space")]
    IdxOverflow,

    #[error("IDX: {images} images but {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite {loss} loss at step {step}")]
    Diverged { step: usize, loss: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips seed context to reach the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Seed { source, .. } => source.root(),
            other => other,
        }
    }
}
