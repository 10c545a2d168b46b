use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents disagree along a named axis.
    #[error("dimension mismatch on {axis}: {detail}")]
    Dimension { axis: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("syntax error at line {line}: {detail}")]
    Syntax { line: usize, detail: String },

    /// A network description violates a structural rule.
    #[error("layer `{layer}`: {detail}")]
    Semantic { layer: String, detail: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn dim(axis: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            axis,
            detail: detail.into(),
        }
    }

    pub(crate) fn semantic(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Semantic {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used as the machine-readable prefix of CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Syntax { .. } => "syntax",
            Error::Semantic { .. } => "semantic",
            Error::State(_) => "state",
            Error::Data(_) => "data",
            Error::Format(_) => "format",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
        }
    }
}
