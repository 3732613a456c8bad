use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the anchor pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The provider's completion could not be read as a JSON document.
    #[error("could not parse extraction output: {reason}")]
    ExtractionParse { reason: String, raw: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("no fixture for {mode} at {span}")]
    NoFixture { mode: String, span: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: String, supported: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the data itself (as opposed to provider or io problems).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::EmptyInput(_)
                | Error::ExtractionParse { .. }
                | Error::Validation(_)
                | Error::DegenerateDesign(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
