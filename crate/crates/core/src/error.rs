use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("{path}: empty audio")]
    EmptyAudio { path: PathBuf },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame {frame}: root finding did not converge")]
    RootFinding { frame: usize },

    #[error("frame {frame}: synthesis filter unstable (|y| = {magnitude:e})")]
    Unstable { frame: usize, magnitude: f64 },

    #[error("pole set is not closed under conjugation")]
    NotConjugateClosed,

    #[error("pool has {available} vectors, policy needs {needed}")]
    PoolTooSmall { needed: usize, available: usize },

    #[error("score set has no {0} trials")]
    EmptyClass(&'static str),

    #[error("speaker {0} has fewer than two segments for self-comparison")]
    SingleSegment(String),

    #[error("diagonal dominance of the original-data matrix is zero")]
    ZeroDominance,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("empty reference transcript{}", .0.as_ref().map(|u| format!(" for {u}")).unwrap_or_default())]
    EmptyReference(Option<String>),

    #[error("plan: {0}")]
    Plan(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn parse(file: impl std::fmt::Display, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Attach a frame index to errors raised by per-frame primitives.
    pub fn at_frame(self, frame: usize) -> Self {
        match self {
            Error::RootFinding { .. } => Error::RootFinding { frame },
            Error::Unstable { magnitude, .. } => Error::Unstable { frame, magnitude },
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
