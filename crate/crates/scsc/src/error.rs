//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("dictionary file error: {0}")]
    DictionaryFormat(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("normal-equations size {columns} exceeds factorization cap {cap}")]
    FactorCapExceeded { columns: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>) -> Self {
        Error::ShapeMismatch { context: context.into() }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
