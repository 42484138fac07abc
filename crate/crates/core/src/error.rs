use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}")]
    Dimension { width: usize, height: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("corrupt run-length mask: {0}")]
    Corruption(String),

    #[error("overlap ratio undefined for a zero-area mask")]
    UndefinedRatio,

    #[error("saliency score undefined for a zero-area mask")]
    UndefinedScore,

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("incomplete input: image `{image_id}` has no prototype for mask `{mask_id}`")]
    IncompleteInput { image_id: String, mask_id: String },

    #[error("cross-image matching needs at least two images with candidates")]
    DegenerateGroup,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{file}: field `{field}`: {message}")]
    Parse {
        file: PathBuf,
        field: String,
        message: String,
    },

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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        file: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
