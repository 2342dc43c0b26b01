use std::fmt;

use emvs_core::EmvsError;

/// Failure of a command, carrying its exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed input files, inconsistent dimensions (exit 2).
    Usage(String),
    /// Unreadable or unwritable paths (exit 3).
    Io(String),
    /// The numerical core failed on valid input (exit 4).
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<EmvsError> for CliError {
    fn from(e: EmvsError) -> Self {
        match e {
            EmvsError::SingularSystem | EmvsError::NonFinite => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}
