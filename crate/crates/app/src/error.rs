use thiserror::Error;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid input or failed validation criteria.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("i/o error: {0}")]
    Io(String),

    #[error("configuration error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: langevin_core::Error,
    },

    #[error("{0} validation criteria failed")]
    ValidationFailed(usize),
}

impl AppError {
    pub fn core(context: impl Into<String>, source: langevin_core::Error) -> Self {
        AppError::Core { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core { source, .. } if source.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        }
    }
}
