use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{what}: size {size} exceeds the cap of {cap}")]
    Capacity { what: &'static str, size: usize, cap: usize },

    #[error("atom array is empty: every site is defective")]
    EmptyArray,

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("divergence undefined: {0}")]
    Divergence(String),

    #[error("training diverged at batch {batch}: {message}")]
    Training { batch: usize, message: String },

    #[error("{path}: {message}")]
    Data { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
