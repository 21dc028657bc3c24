use thiserror::Error;

/// Errors produced by model parsing, construction and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Model(String),

    #[error("state-space too large: needs more than {cap} states (cap exceeded)")]
    CapacityExceeded { cap: u128 },

    #[error("state code {code} out of range for a state space of {space} states")]
    DecodeOutOfRange { code: u128, space: u128 },

    #[error("target state is not a successor of the source state")]
    NotASuccessor,

    #[error("linear system is singular; the absorbing chain is malformed")]
    SingularSystem,

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn model(message: impl Into<String>) -> Self {
        Error::Model(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
