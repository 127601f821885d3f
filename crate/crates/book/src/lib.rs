//! The chapters of the guide in `book/src`, compiled as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/walks.md")]
pub mod walks {}
#[doc = include_str!("../../../book/src/disorder.md")]
pub mod disorder {}
#[doc = include_str!("../../../book/src/wick.md")]
pub mod wick {}
#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}
#[doc = include_str!("../../../book/src/polymer.md")]
pub mod polymer {}
#[doc = include_str!("../../../book/src/continuum.md")]
pub mod continuum {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
