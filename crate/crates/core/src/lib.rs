//! Scoring math and data contracts for evaluating conditional generative
//! models by the accuracy a proxy classifier reaches when trained on their
//! samples ("fitting capacity").
//!
//! This crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit seed: IDX decoding from byte
//! slices, dataset splitting, the per-batch mixture schedule, early stopping,
//! the 1-NN control classifier, and every metric (fitting capacity, the
//! adapted Inception Score and Fréchet distance, z-normalization and boxplot
//! statistics). File IO, neural networks and the experiment harness live in
//! the `fitcap` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dataset;
pub mod early_stop;
mod error;
pub mod idx;
pub mod knn;
pub mod metrics;
pub mod mixture;
pub mod seed;
pub mod synthetic;

pub use dataset::{split_dataset, split_indices, DatasetSplits, LabeledDataset, SampleShape};
pub use early_stop::{EarlyStopping, Observation, StopReason};
pub use error::{Error, Result};
pub use knn::{knn_accuracy, KnnConfig};
pub use mixture::{BatchOrigin, MixtureConfig, MixtureSchedule, RealCycle};
pub use seed::{derive_seed, Rng, SeedRole};
pub use synthetic::{make_synthetic_gaussian, SyntheticGaussian};
