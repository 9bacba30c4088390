use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("class {0} has no records in the requested split")]
    EmptyClass(u32),
    #[error("clustering failed: {0}")]
    Cluster(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("language model unavailable after {attempts} attempt(s): {last_error}")]
    LlmUnavailable { attempts: u32, last_error: String },
    #[error("language model returned an unusable response: {0}")]
    LlmResponse(String),
    #[error("paraphrase cache miss for class {class_id} while offline")]
    OfflineCacheMiss { class_id: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing semantics: {0}")]
    MissingSemantics(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("episode sampling failed: {0}")]
    Sampling(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
