use std::path::PathBuf;

use slimnas_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("output directory {} is in use (lock file {} exists; remove it if no run is active)", .dir.display(), .lock.display())]
    Locked { dir: PathBuf, lock: PathBuf },

    #[error("{0}")]
    Usage(String),

    #[error("internal check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// 0 success, 2 configuration, 3 infeasible constraints, 4 numeric
    /// failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Parse { .. } | Error::Shape(_) | Error::SkeletonMismatch { .. } => 2,
                Error::Infeasible { .. } | Error::PopulationExhausted { .. } => 3,
                Error::NonFiniteLoss { .. } | Error::Evaluation { .. } => 4,
                Error::Format(_) | Error::Io(_) => 1,
            },
            CliError::Locked { .. } | CliError::Internal(_) | CliError::Io { .. } => 1,
        }
    }
}
