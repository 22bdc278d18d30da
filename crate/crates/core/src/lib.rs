//! Split-learning simulator: channel and cost models, synthetic scenarios
//! and the camera/BS split network.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod channel;
pub mod checkpoint;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod mixup;
pub mod model;
pub mod scenario;
pub mod strategy;

pub use error::{CoreError, Result};
