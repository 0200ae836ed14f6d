use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with another one.
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A noise schedule produced values the sampler cannot use.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// Runtime input that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn input(reason: impl Into<String>) -> Self {
        Error::InvalidInput(reason.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
