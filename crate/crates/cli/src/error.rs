use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error(transparent)]
    Core(#[from] fracheat_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("check failed: {0}")]
    Assertion(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for failures during or after computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Parse { .. } | Self::Validation { .. } => 2,
            Self::Core(_) | Self::Io(_) | Self::Assertion(_) => 1,
        }
    }
}
