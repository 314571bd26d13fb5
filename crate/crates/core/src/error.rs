use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed image: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("{path}: unsupported image format: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },

    #[error("{path}: mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    MaskDimensions {
        path: PathBuf,
        mask_w: usize,
        mask_h: usize,
        img_w: usize,
        img_h: usize,
    },

    #[error("{path}: all pixels invalid after preprocessing")]
    AllPixelsInvalid { path: PathBuf },

    #[error("{path}: manifest error: {msg}")]
    Manifest { path: PathBuf, msg: String },

    /// Invalid numeric parameter or malformed configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("channel {channel} has no valid pixels")]
    NoValidPixels { channel: usize },

    #[error("degenerate feature map: {0}")]
    DegenerateFeatureMap(String),

    #[error("illuminant component {channel} is zero or negative")]
    ZeroIlluminant { channel: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("empty input")]
    EmptyInput,

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Configuration problems (as opposed to bad data) map to exit code 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
