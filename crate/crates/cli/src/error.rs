use thiserror::Error;

/// Failure of a CLI stage, classified for the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or input files.
    #[error("{stage}: {message}")]
    Validation { stage: &'static str, message: String },
    /// The data could not be analysed (degenerate variance, failed factorization).
    #[error("{stage}: {message}")]
    Numeric { stage: &'static str, message: String },
}

impl CliError {
    pub fn validation(stage: &'static str, message: impl Into<String>) -> Self {
        CliError::Validation {
            stage,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Numeric { .. } => 3,
        }
    }

    /// Attach a stage name to a library error, keeping its classification.
    pub fn from_core(stage: &'static str, e: spatiofd::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric {
                stage,
                message: e.to_string(),
            }
        } else {
            CliError::Validation {
                stage,
                message: e.to_string(),
            }
        }
    }

    pub fn io(stage: &'static str, path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::validation(stage, format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// `result.stage("detect")?` tags a library error with the failing stage.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for spatiofd::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}
