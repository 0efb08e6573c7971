use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {node}: {detail}")]
    Shape { node: String, detail: String },

    #[error("non-finite value produced at {node}")]
    NonFinite { node: String },

    #[error("loss node {node} is not a scalar (shape {shape:?})")]
    NotScalar { node: String, shape: Vec<usize> },

    #[error("{node} is not differentiable but lies on the loss path")]
    NonDifferentiable { node: String },

    #[error("missing graph input `{0}`")]
    MissingInput(String),

    #[error("parse error on line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
