use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {field}: {message}")]
    Config { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Core(#[from] spde_core::Error),
}

impl HarnessError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn file(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Core(spde_core::Error::StepFailure { .. } | spde_core::Error::NonConvergence { .. }) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
