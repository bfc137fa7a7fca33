use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed input; `line` is 1-based.
    #[error("{origin}:{line}: {message}")]
    Format { origin: String, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] zcal_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("detector: {0}")]
    Detector(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
