use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grad(#[from] gradcore::GradError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("scene generation failed: {0}")]
    Scene(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {record}: {message}")]
    Record { record: String, message: String },

    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    Training { epoch: usize, batch: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn record(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Record { record: record.into(), message: message.into() }
    }
}
