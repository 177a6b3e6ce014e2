use std::path::PathBuf;

use spectrabench::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("data error: {0}")]
    Data(CoreError),

    #[error(transparent)]
    Core(CoreError),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(msg) => CliError::Config(msg),
            CoreError::Parse { .. }
            | CoreError::Schema(_)
            | CoreError::Label { .. }
            | CoreError::Integrity(_)
            | CoreError::Capacity(_)
            | CoreError::DegenerateSpectrum(_)
            | CoreError::DegenerateClass(_)
            | CoreError::DegenerateLabel(_)
            | CoreError::Degenerate(_)
            | CoreError::Io(_) => CliError::Data(e),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for configuration problems, 3 for data problems, 4 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Core(_) | CliError::Write { .. } | CliError::Csv(_) | CliError::Json(_) => EXIT_INTERNAL,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Write { path, source }
    }
}
