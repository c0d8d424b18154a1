use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::SingularInput(msg.into())
    }

    /// True for failures caused by the numbers rather than by the caller or the environment.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularInput(_) | Error::Numerical(_) | Error::DegenerateConfig(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
