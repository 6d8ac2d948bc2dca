use std::path::PathBuf;

/// Errors produced by the registration and fusion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },

    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BufferLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },

    #[error("sample {value} at index {index} is not finite or outside [0, 1]")]
    InvalidSample { index: usize, value: f32 },

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("image {width}x{height} is too small (need at least {min} in each dimension)")]
    TooSmall { width: usize, height: usize, min: usize },

    #[error("coordinates out of bounds: {0}")]
    OutOfBounds(String),

    #[error("degenerate point configuration")]
    Degenerate,

    #[error("point maps to infinity")]
    PointAtInfinity,

    #[error("need at least {needed} matches, got {got}")]
    NotEnoughMatches { needed: usize, got: usize },

    #[error("registration failed: only {matches} reliable matches at the finest level")]
    RegistrationFailed { matches: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
