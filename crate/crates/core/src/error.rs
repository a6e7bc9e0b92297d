use thiserror::Error;

use crate::model::Var;

/// Failures raised while reading an instance file.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("model references unknown variable {0}")]
    UnknownVar(Var),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("oracle guard violated: {0}")]
    OracleGuard(String),

    #[error("internal contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
