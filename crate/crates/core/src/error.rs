use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory's numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported branch: {0}")]
    UnsupportedBranch(String),

    #[error("insufficient spectrum: {0}")]
    InsufficientSpectrum(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
