use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("population source exhausted at round {round}")]
    DataExhausted { round: usize },

    #[error("learner is unfitted: {0}")]
    Unfitted(String),

    #[error("test set contains no example of class {class}")]
    MissingClass { class: usize },

    #[error("trace configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed dataset at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
