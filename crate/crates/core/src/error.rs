use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed EDF header field.
    #[error("EDF header error at byte {offset}: {message}")]
    Header { offset: usize, message: String },

    /// The data section ended inside a data record.
    #[error("EDF data truncated: {complete} complete data record(s) of {expected} read")]
    Truncated { complete: usize, expected: usize },

    #[error("montage error: {0}")]
    Montage(String),

    #[error("annotation line {line}: unknown stage token {token:?}")]
    UnknownStage { line: usize, token: String },

    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },

    #[error("invalid parameter `{name}`: {message}")]
    Param { name: &'static str, message: String },

    #[error("window error: {0}")]
    Window(String),

    #[error("sample index {index} outside comparable range [{lo}, {hi}]")]
    Index { index: usize, lo: usize, hi: usize },

    #[error("empty signal `{0}`")]
    EmptySignal(String),

    #[error("channel `{0}` cannot be resolved")]
    UnknownChannel(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("detection error: {0}")]
    Detection(String),

    #[error("segmentation error: {0}")]
    Segmentation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("JSON error: {0}")]
    Json(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::Param {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
