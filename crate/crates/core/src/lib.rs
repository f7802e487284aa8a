//! Reverse-mode automatic differentiation of a small Fortran-like language,
//! with per-call-site checkpointing control and an analytic model of the
//! resulting memory/time trade-off.

pub mod adjoint;
pub mod costmodel;
pub mod dataflow;
pub mod lang;
pub mod metrics;
