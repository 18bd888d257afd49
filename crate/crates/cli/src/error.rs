use tcn_core::Error as CoreError;

/// Process exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad flags, bad configuration, or a check that did not pass.
    Usage = 1,
    /// Unreadable or inconsistent input files.
    Data = 2,
    /// A requested size exceeds a hard limit.
    Capacity = 3,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Capacity { .. } => ExitKind::Capacity,
            CoreError::Io { .. }
            | CoreError::Parse { .. }
            | CoreError::Schema(_)
            | CoreError::Shape(_) => ExitKind::Data,
            CoreError::Argument(_) | CoreError::State(_) | CoreError::Json(_) => ExitKind::Usage,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
