use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("cannot parse config: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("pulse file: {0}")]
    Pulse(String),

    #[error(transparent)]
    Core(#[from] weylctl::Error),
}

impl CliError {
    /// Process exit code: 3 for a monotonicity violation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(weylctl::Error::MonotonicityViolation { .. }) => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
