// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod court;
pub mod efficiency;
pub mod error;
pub mod eval;
pub mod ess;
pub mod kernel;
pub mod lgcp;
pub mod nmf;
pub mod pca;
pub mod render;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
