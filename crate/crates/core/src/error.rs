use std::path::PathBuf;

/// Errors produced by the segmentation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("window must be odd")]
    EvenWindow,
    #[error("window {window} exceeds image size {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no lung candidate found")]
    NoLungCandidate,
    #[error("degenerate histogram")]
    DegenerateHistogram,
    #[error("too many clusters")]
    TooManyClusters,
    #[error("contour collapsed")]
    ContourCollapsed,
    #[error("empty mask")]
    EmptyMask,
    #[error("no negatives in truth")]
    NoNegatives,
    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),
    #[error("invalid anatomy: {0}")]
    InvalidAnatomy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
