use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the lighting and relighting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed file: {0}")]
    Decode(String),

    #[error("environment map must be 2:1, got {width}x{height}")]
    AspectRatio { width: usize, height: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("direction is not unit length (|d| = {0})")]
    NonUnitDirection(f64),

    #[error("no dominant light (peak/mean = {peak_to_mean:.3}, need >= 1.5)")]
    NoDominantLight { peak_to_mean: f64 },

    #[error("environment map has no positive radiance")]
    ZeroEnvironment,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("OLAT basis is empty")]
    EmptyBasis,

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("feature map plane {plane} is not constant")]
    NonConstantPlane { plane: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable name of the error kind, used on the command line and in HTTP
    /// error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::Decode(_) => "Decode",
            Error::AspectRatio { .. } => "AspectRatio",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NonUnitDirection(_) => "NonUnitDirection",
            Error::NoDominantLight { .. } => "NoDominantLight",
            Error::ZeroEnvironment => "ZeroEnvironment",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyBasis => "EmptyBasis",
            Error::EmptyMask => "EmptyMask",
            Error::NonConstantPlane { .. } => "NonConstantPlane",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
