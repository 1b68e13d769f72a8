use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no interactions survive the rating threshold {threshold}")]
    EmptyDataset { threshold: u8 },

    #[error("cannot split {count} events: at least 2 are required")]
    Split { count: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid stock constraint: {0}")]
    Constraint(String),

    #[error("malformed flow network: {0}")]
    Network(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
