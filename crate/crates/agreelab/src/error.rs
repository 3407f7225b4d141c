use std::path::PathBuf;

/// Failure classes of the tool. Each maps to a distinct process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error(transparent)]
    Core(#[from] agreelab_core::Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        source: Box<AppError>,
    },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> AppError {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl std::fmt::Display) -> AppError {
        AppError::Format {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// Exit status: 2 configuration, 3 filesystem, 4 malformed input file,
    /// 5 analysis or training failure; a failed pipeline stage reports the
    /// code of its cause.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io { .. } => 3,
            AppError::Format { .. } => 4,
            // Bad unit names, out-of-model units and unknown words come from user input.
            AppError::Core(
                agreelab_core::Error::Config(_)
                | agreelab_core::Error::InvalidArgument(_)
                | agreelab_core::Error::UnitOutOfRange { .. }
                | agreelab_core::Error::UnknownToken(_),
            ) => 2,
            AppError::Core(_) => 5,
            AppError::Stage { source, .. } => source.exit_code(),
        }
    }
}
