use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("{field}: {message}")]
    Domain { field: String, message: String },

    #[error("invalid pass plan: {0}")]
    Plan(String),

    /// An engine invariant was violated. Indicates a bug, not bad input.
    #[error("internal fault: {0}")]
    Fault(String),

    #[error("observation source: {0}")]
    Source(String),

    #[error("session: {0}")]
    Session(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Domain {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_open_unit(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(field, format!("must lie in (0, 1), got {value}")))
    }
}
