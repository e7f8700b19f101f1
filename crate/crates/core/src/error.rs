use thiserror::Error;

/// Errors raised by the simulation, training and bound-evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An index, size or scalar argument is out of its legal range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A distribution or parameter failed a structural check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The environment cannot perform the requested operation.
    #[error("unsupported operation: {0}")]
    Capability(String),

    /// Exact enumeration would exceed the configured path budget.
    #[error("enumeration needs {required} paths, exceeding the cap of {cap}")]
    Capacity { required: f64, cap: u64 },

    /// A computation produced a NaN or infinite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A closed-form bound was requested outside its validity region.
    #[error("bound not valid: requires {condition} (got {value})")]
    BoundValidity { condition: &'static str, value: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from user input rather than a failure at run time.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Argument(_) | Error::Validation(_) | Error::Config { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
