//! Fitting capacity and per-class comparison against the baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Test accuracy of a classifier trained only on generated data.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FittingCapacity(f64);

impl FittingCapacity {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Tags a test accuracy as a fitting capacity. Only runs with `tau = 1`
/// qualify; any real data in the training mixture disqualifies the run.
pub fn fitting_capacity(test_accuracy: f64, tau: f64) -> Result<FittingCapacity> {
    if tau != 1.0 {
        return Err(Error::arg(format!("fitting capacity needs tau = 1, run used tau = {tau}")));
    }
    if !(0.0..=1.0).contains(&test_accuracy) {
        return Err(Error::arg(format!("accuracy {test_accuracy} outside [0,1]")));
    }
    Ok(FittingCapacity(test_accuracy))
}

/// Elementwise `model - baseline`. A class with no test samples has no
/// accuracy (`None`), and its difference is `None` too.
pub fn per_class_relative(model: &[Option<f64>], baseline: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if model.len() != baseline.len() {
        return Err(Error::arg(format!(
            "per-class lengths differ ({} vs {})",
            model.len(),
            baseline.len()
        )));
    }
    Ok(model.iter().zip(baseline).map(|(m, b)| Some((*m)? - (*b)?)).collect())
}
