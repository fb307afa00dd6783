use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame is {width}x{height}, minimum supported size is {min}x{min}")]
    FrameTooSmall { width: usize, height: usize, min: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("track count must be at least 1")]
    ZeroTracks,

    #[error("buffer holds no frames")]
    EmptyBuffer,

    #[error("query ({x}, {y}) at frame {t} lies outside the {width}x{height} frame")]
    QueryOutOfBounds {
        t: u64,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("query frame {t} is older than the next frame to process ({next})")]
    QueryInPast { t: u64, next: u64 },

    #[error("expected frame {expected}, got frame {actual}")]
    NonConsecutiveFrame { expected: u64, actual: u64 },

    #[error("frame is {actual_w}x{actual_h}, stream started at {expected_w}x{expected_h}")]
    FrameSizeChanged {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("invalid window/stride: window {window}, stride {stride}")]
    InvalidWindow { window: usize, stride: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("affine transform at frame {frame} is not invertible")]
    DegenerateAffine { frame: u64 },

    #[error("no correspondences to evaluate")]
    EmptyCorrespondence,

    #[error("predictions and ground truth misaligned: {missing} ground-truth records without a prediction")]
    Misaligned { missing: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
