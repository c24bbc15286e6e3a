use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("action index {action} out of range (0..{n})")]
    InvalidAction { action: usize, n: usize },
    #[error("index out of range: {0}")]
    Index(String),
    #[error("not a probability simplex: {0}")]
    NotSimplex(String),
    #[error("identifiability violation ({condition}): {detail}")]
    Identifiability { condition: String, detail: String },
    #[error("order ids mismatch: {0}")]
    OrderMismatch(String),
    #[error("missing choice model: {0}")]
    MissingModel(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_config(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { field: field.to_string(), reason: reason.into() }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
