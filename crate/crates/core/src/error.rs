use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("corruption: {0}")]
    Corruption(String),

    #[error("invalid value pointer: file {file_id} offset {offset} length {length}")]
    InvalidPointer {
        file_id: u32,
        offset: u64,
        length: u32,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("store already exists at {0}")]
    AlreadyExists(String),

    #[error("store is closed")]
    Closed,

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corruption(msg.into())
    }
}
