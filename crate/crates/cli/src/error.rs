use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at `{pointer}`: {message}")]
    Config { pointer: String, message: String },
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numeric(#[from] rigidity_core::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration and output problems, 3 for
    /// fatal numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}
