//! Reverse differentiation: plans, derivative rules, the sweep engine and
//! the adjoint listing.

mod engine;
mod fdcheck;
mod listing;
pub mod plan;
pub mod rules;
mod shadow;
pub mod stack;

use thiserror::Error;

use crate::lang::EvalError;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{0}")]
    Plan(String),
    #[error("{sweep} sweep: {source}")]
    Eval { sweep: &'static str, source: EvalError },
    #[error("tape discipline violated: {0}")]
    Stack(String),
    #[error("{0}")]
    Input(String),
    #[error("invalid program:\n{0}")]
    Invalid(String),
    #[error("shadow trace mismatch: {0}")]
    Shadow(String),
}

pub use engine::{differentiate, DiffOptions, Differentiation, ProcStats, RunNode, RunStats, SiteStats};
pub use fdcheck::{fd_check, rel_error, weighted_output, FdEntry, FdReport};
pub use listing::emit_listing;
pub use plan::{reachable_sites, CheckpointPlan, Mode};
pub use shadow::ShadowTrace;

#[cfg(test)]
mod tests;
