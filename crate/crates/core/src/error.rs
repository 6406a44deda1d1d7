//! Crate-wide error type.

use std::fmt;

use crate::symexpr::{EvalError, ParseError};

/// Errors surfaced by the form / geometry / current layers.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Ambient dimensions disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// Form or chain degree does not fit the operation.
    DegreeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Expression failed to parse.
    Parse(ParseError),
    /// Expression evaluation hit a domain error.
    Eval(EvalError),
    /// A test form's support is not strictly inside the current's ambient box.
    SupportEscapesRegion,
    /// Structural problem in an input (bad multi-index, dangling edge, ...).
    Invalid(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::DegreeMismatch {
                context,
                expected,
                got,
            } => {
                write!(f, "{context}: degree mismatch, expected {expected}, got {got}")
            }
            CoreError::Parse(e) => write!(f, "{e}"),
            CoreError::Eval(e) => write!(f, "{e}"),
            CoreError::SupportEscapesRegion => {
                write!(f, "test form support escapes the ambient region")
            }
            CoreError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CoreError {}

impl From<ParseError> for CoreError {
    fn from(e: ParseError) -> Self {
        CoreError::Parse(e)
    }
}

impl From<EvalError> for CoreError {
    fn from(e: EvalError) -> Self {
        CoreError::Eval(e)
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
