use std::process::ExitCode;

/// Failure of a command, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad command line. Exit status 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input. Exit status 2.
    #[error("{0}")]
    Validation(String),
    /// An algorithm failed on valid input. Exit status 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status())
    }

    pub fn status(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Prefixes the message with `context`, keeping the class.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{context}: {m}")),
            CliError::Validation(m) => CliError::Validation(format!("{context}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{context}: {m}")),
        }
    }
}

impl From<elastic_ds::Error> for CliError {
    fn from(e: elastic_ds::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("malformed JSON: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
