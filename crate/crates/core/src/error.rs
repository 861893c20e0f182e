use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row {row}: {msg}")]
    Validation { row: usize, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("corrupt index: {0}")]
    Corruption(String),

    #[error("fit stage {stage}: {msg}")]
    Fit { stage: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
