use std::path::PathBuf;

/// Errors raised by the motion-imitation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("frame {frame}: {msg}")]
    BadFrame { frame: usize, msg: String },

    #[error("empty sequence")]
    EmptySequence,

    #[error("unknown arm side {0:?} (expected \"left\" or \"right\")")]
    UnknownSide(String),

    #[error("missing keypoint id {name:?} for side {side}")]
    MissingKeypointId { side: &'static str, name: String },

    #[error("degenerate base segment in frame {frame} (|p0 - p1| = {len:.3e})")]
    DegenerateBase { frame: usize, len: f64 },

    #[error("zero-length link {link} in frame {frame}")]
    ZeroLengthLink { frame: usize, link: usize },

    #[error("chain must have exactly 7 joints, found {0}")]
    JointCount(usize),

    #[error("joint j{joint}: lower limit {lower} is not below upper limit {upper}")]
    InvertedLimits { joint: usize, lower: f64, upper: f64 },

    #[error("start frame {start} out of range (reference has {frames} frames)")]
    StartFrameOutOfRange { start: usize, frames: usize },

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("non-finite gradient in {component} during update {update}")]
    NonFiniteGradient { component: &'static str, update: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
