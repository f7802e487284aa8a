//! Interprocedural analyses over a program and a checkpoint plan.

mod analysis;
mod sets;
mod summary;

pub use analysis::{analyze, AnalysisResults, ProcAnalysis, StmtInfo};
pub use sets::VarSet;
pub use summary::{compute_summaries, ProcSummary};

#[cfg(test)]
mod tests;
