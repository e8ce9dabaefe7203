use thiserror::Error;

/// Errors raised while loading configuration or pricing.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is missing, malformed or violates an invariant.
    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// An argument outside the domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model transform or integral left its valid region (for example a
    /// non-positive transformed drift coefficient).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True for errors caused by user input (as opposed to numerical breakdown).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Json(_) | Error::Io(_) | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
