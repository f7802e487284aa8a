use thiserror::Error;

use super::ast::Span;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {msg}")]
    Syntax { span: Span, msg: String },
    #[error("{span}: unknown intrinsic `{name}`")]
    UnknownIntrinsic { span: Span, name: String },
    #[error("{span}: NOCHECKPOINT directive is not followed by a call")]
    DanglingDirective { span: Span },
}

impl ParseError {
    pub(crate) fn syntax(line: u32, col: u32, msg: impl Into<String>) -> Self {
        ParseError::Syntax { span: Span::new(line, col), msg: msg.into() }
    }

    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::UnknownIntrinsic { span, .. }
            | ParseError::DanglingDirective { span } => *span,
        }
    }
}

/// Runtime failure while evaluating primal or derivative code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{span}: division by zero")]
    DivisionByZero { span: Span },
    #[error("{span}: {what} outside its domain (argument {arg})")]
    Domain { span: Span, what: &'static str, arg: f64 },
    #[error("{span}: read of uninitialized variable `{var}`")]
    Uninitialized { span: Span, var: String },
    #[error("{span}: index {index} out of bounds for `{var}`")]
    OutOfBounds { span: Span, var: String, index: f64 },
    #[error("{span}: non-integer value {value} used as index or loop bound")]
    NonInteger { span: Span, value: f64 },
    #[error("{span}: non-finite result {value}")]
    NonFinite { span: Span, value: f64 },
    #[error("unknown procedure `{0}`")]
    UnknownProc(String),
    #[error("input `{var}`: {msg}")]
    BadInput { var: String, msg: String },
}
