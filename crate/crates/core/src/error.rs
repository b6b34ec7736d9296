use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),

    #[error("cannot delete every slice of axis {axis} (extent {extent})")]
    EmptyAxis { axis: usize, extent: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("shape error at layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("layer {layer} is a {kind}, which is not prunable")]
    Kind { layer: usize, kind: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerics error: {0}")]
    Numerics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no prunable layers of the selected kinds")]
    NothingToPrune,

    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientData {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
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
}
