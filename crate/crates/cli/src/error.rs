use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Runtime(#[from] rydgen::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("check suite {0} failed")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}
