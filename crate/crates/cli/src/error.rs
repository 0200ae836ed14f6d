use std::fmt;
use std::path::Path;

/// Failure of a CLI verb, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration. Exit code 2.
    Config(String),
    /// Anything that fails after the configuration was accepted. Exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }

    /// Wraps a library error raised while resolving section `section`.
    pub(crate) fn in_section(section: &str, err: evosearch_core::Error) -> Self {
        match err {
            evosearch_core::Error::Config { field, reason }
                if field.starts_with(&format!("{section}.")) =>
            {
                CliError::Config(format!("{field}: {reason}"))
            }
            evosearch_core::Error::Config { field, reason } => {
                CliError::Config(format!("{section}.{field}: {reason}"))
            }
            other => CliError::Config(format!("{section}: {other}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<evosearch_core::Error> for CliError {
    fn from(err: evosearch_core::Error) -> Self {
        match err {
            evosearch_core::Error::Config { .. } => CliError::Config(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
