// Numeric kernels index several parallel slices; `!(x > 0.0)` style guards reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod envs;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod replay;
pub mod run;
pub mod sac;
pub mod seed;
pub mod slack;

pub use error::{Error, Result};
