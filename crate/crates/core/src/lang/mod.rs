//! The mini imperative language: IR, parser, printer, validator and the
//! primal interpreter.

pub mod ast;
mod error;
pub mod interp;
mod parser;
pub mod printer;
mod store;
mod validate;

pub use ast::*;
pub use error::{EvalError, ParseError};
pub use interp::{eval_primal, observed_writes, EvalOptions};
pub use parser::parse_program;
pub use printer::program_to_string;
pub use store::{Store, Value};
pub use validate::{topo_order, validate, Diagnostic};
