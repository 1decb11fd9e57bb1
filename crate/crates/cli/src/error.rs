use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] cuemwf_core::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 1 for bad input, 2 for IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Core(_) => 1,
            Self::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
