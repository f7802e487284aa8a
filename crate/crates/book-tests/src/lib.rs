//! Runs the code blocks of the book as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/language.md")]
pub mod language {}
#[doc = include_str!("../../../book/src/adjoint.md")]
pub mod adjoint {}
#[doc = include_str!("../../../book/src/dataflow.md")]
pub mod dataflow {}
#[doc = include_str!("../../../book/src/costmodel.md")]
pub mod costmodel {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
