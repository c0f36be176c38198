use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("intensity {value} at pixel ({x}, {y}) is outside [0, 255]")]
    IntensityOutOfRange { x: usize, y: usize, value: f64 },

    #[error(
        "resolution mismatch: expected {expected_width}x{expected_height}, got {width}x{height}"
    )]
    ResolutionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("grid of {width}x{height} needs {expected} values, got {actual}")]
    GridSize {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },

    #[error("event {index} at ({x}, {y}) lies outside a {width}x{height} sensor")]
    EventOutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: usize,
        height: usize,
    },

    #[error("event {index} at t={t} precedes the previous event")]
    UnsortedEvents { index: usize, t: f64 },

    #[error("event timestamp {t} at index {index} is negative or not finite")]
    BadTimestamp { index: usize, t: f64 },

    #[error(
        "frame timestamps must be strictly increasing: frame {index} at t={t} follows t={previous}"
    )]
    NonMonotoneFrames { index: usize, t: f64, previous: f64 },

    #[error("invalid calibration at pixel ({x}, {y}): c={c}, b={b} (need c > 0 and |b| < c)")]
    InvalidCalibration { x: usize, y: usize, c: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("need at least {required} frames, got {actual}")]
    TooFewFrames { required: usize, actual: usize },

    #[error("frame index range {start}..={end} exceeds the {count} available frames")]
    FrameIndexOutOfRange {
        start: usize,
        end: usize,
        count: usize,
    },

    #[error("every pixel is degenerate; no median residual exists")]
    AllPixelsDegenerate,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
