use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("location ({x}, {y}) outside {width}x{height} grid")]
    OutOfGrid {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("detections must be sorted by descending confidence (index {0})")]
    UnsortedDetections(usize),

    #[error("track {0} has no Kalman state")]
    MissingKalmanState(u64),

    #[error("covariance is not positive semi-definite")]
    NotPsd,

    #[error("frame index went backwards: {previous} -> {current}")]
    FrameOrder { previous: i64, current: i64 },

    #[error("tracker mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("frame sets differ between ground truth and predictions: {0}")]
    FrameMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
