//! Class unlearning for image classifiers trained from scratch, using only a
//! small labelled subset of the original training data.

pub mod baselines;
pub mod data;
pub mod error;
pub mod erwp;
pub mod eval;
pub mod io_util;
pub mod model;
pub mod partition;
pub mod relevance;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use partition::ClassPartition;
