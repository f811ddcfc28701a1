//! Error types.

use thiserror::Error;

use crate::symbol::Symbol;

/// A syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVariable(Symbol),
    #[error("unknown lock {0}")]
    UnknownLock(Symbol),
    #[error("unknown table {0}")]
    UnknownTable(Symbol),
    #[error("table {0} has no entry for {1}")]
    TableOutOfRange(Symbol, i64),
    #[error("unknown level {0}")]
    UnknownLevel(Symbol),
    #[error("type mismatch: {0}")]
    Type(String),
    #[error("{0} is not available in this context")]
    MissingContext(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("ill-formed program: {0}")]
    Program(String),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("corpus integrity check failed for {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
