//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by model construction, fitting, pruning and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("shape raster has no foreground pixels")]
    EmptyForeground,

    #[error("no grid center lands on foreground (radius/spacing too large for the shape)")]
    NoInteriorCenters,

    #[error("energy became non-finite at iteration {iteration} (step size too large)")]
    NonFiniteEnergy { iteration: usize },

    #[error("all polytope regions are empty; the model covers no foreground")]
    AllRegionsEmpty,

    #[error("keep-k of {k} exceeds the polytope count of {n}")]
    KeepTooLarge { k: usize, n: usize },

    #[error("pruning left no polytopes")]
    NoSurvivors,

    #[error("unsupported or corrupt image {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("malformed model file: {0}")]
    ModelParse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
