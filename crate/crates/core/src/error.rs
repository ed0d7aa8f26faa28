use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading a BVH document.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvhError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: expected a number, found `{token}`")]
    NotANumber { line: usize, token: String },
    #[error("line {line}: frame {frame} has {found} channel values, expected {expected}")]
    ChannelCount {
        line: usize,
        frame: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: declared {declared} frames but found {found}")]
    FrameCount {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("unexpected end of document: {0}")]
    UnexpectedEof(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("invalid motion: {0}")]
    Motion(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate 6D rotation (parallel or zero columns)")]
    DegenerateRotation,
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("unknown identity `{name}`; available identities: {available}")]
    UnknownIdentity { name: String, available: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at stage {stage}, iteration {iteration}: {detail}")]
    Diverged {
        stage: usize,
        iteration: usize,
        detail: String,
    },
    #[error("model is not trained (trained stages: {trained} of {total})")]
    Untrained { trained: usize, total: usize },
    #[error("metric error: {0}")]
    Metric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
