use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure while running a valid configuration. Exit code 3.
    #[error("run error: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
        }
    }

    pub fn run(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Run(format!("{context}: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
