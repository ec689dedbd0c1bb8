use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] certband_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// Input file violates its schema; the message lists offending lines.
    #[error("{0}")]
    Schema(String),

    #[error("config {path}: {message}")]
    Config { path: String, message: String },
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 2 validation, 3 divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_divergence() => 3,
            CliError::Core(certband_core::Error::NoConvergence(_)) => 1,
            CliError::Core(_) | CliError::Schema(_) | CliError::Config { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}
