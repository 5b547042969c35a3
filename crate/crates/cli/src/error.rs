use macroplace::bookshelf::BookshelfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] BookshelfError),
    #[error("illegal layout: {0}")]
    Illegal(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Other(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Illegal(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}
