use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("image data length {got} does not match {width}x{height}x{channels}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("odd image dimensions {width}x{height}; a Bayer mosaic needs an even grid")]
    OddDimensions { width: usize, height: usize },
    #[error("patch side {side} does not fit in a {width}x{height} image")]
    PatchTooLarge {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("negative aggregation weight {0}")]
    NegativeWeight(f64),
    #[error("empty sequence")]
    EmptySequence,
    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("no usable noise observations (degenerate input)")]
    NoNoiseObservations,
    #[error("noise curve is not positive at intensity {at}: sigma = {sigma}")]
    NonPositiveSigma { at: f64, sigma: f64 },
    #[error("channel {0} has zero mean")]
    ZeroMeanChannel(usize),
    #[error("sample {value} outside [0, {maxval}]")]
    SampleOutOfRange { value: f64, maxval: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
