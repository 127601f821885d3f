pub mod error;
pub mod numeric;
pub mod rng;
pub mod disorder;
pub mod stable_walk;
pub mod wick_algebra;
pub mod kernel_space;
pub mod polymer;
pub mod she_oracle;
pub mod harness;
mod selftest;

pub use error::{Error, Result};
