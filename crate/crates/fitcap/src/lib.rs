//! Training, evaluation and reporting for classifier-based evaluation of
//! conditional generative models.

pub mod checkpoint;
pub mod classifier;
pub mod data;
mod error;
pub mod evaluation;
pub mod generative;
pub mod harness;
pub mod mixture;
pub mod nn;
pub mod report;

pub use error::{Error, Result};
