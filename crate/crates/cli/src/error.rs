use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(anyhow::Error),
    #[error("{0:#}")]
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn data(context: impl std::fmt::Display, e: impl Into<anyhow::Error>) -> Self {
        CliError::Data(e.into().context(context.to_string()))
    }

    pub fn internal(context: impl std::fmt::Display, e: impl Into<anyhow::Error>) -> Self {
        CliError::Internal(e.into().context(context.to_string()))
    }
}

impl From<bcbof::Error> for CliError {
    fn from(e: bcbof::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
