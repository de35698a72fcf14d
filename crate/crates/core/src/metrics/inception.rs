//! Inception Score over class posteriors from any classifier.
//!
//! `IS = exp(mean_x KL(p(y|x) || p(y)))` where `p(y)` is the column mean of
//! the posterior rows. The KL term splits into cross-entropy minus entropy,
//! which [`inception_terms`] exposes for cross-checking.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-stochastic matrix: `n` rows of class probabilities over `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    classes: usize,
    data: Vec<f64>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl ProbMatrix {
    pub fn new(data: Vec<f64>, classes: usize) -> Result<Self> {
        if classes == 0 || data.is_empty() || data.len() % classes != 0 {
            return Err(Error::arg(format!(
                "{} values do not form rows of {classes} probabilities",
                data.len()
            )));
        }
        let rows = data.len() / classes;
        for (r, row) in data.chunks_exact(classes).enumerate() {
            if let Some(&v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::arg(format!("row {r} has entry {v} outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::arg(format!("row {r} sums to {sum}, not 1")));
            }
        }
        Ok(ProbMatrix { rows, classes, data })
    }

    /// Row-wise softmax of log-probabilities or logits, computed in `f64`.
    pub fn from_logits(logits: &[f32], classes: usize) -> Result<Self> {
        if classes == 0 || logits.is_empty() || logits.len() % classes != 0 {
            return Err(Error::arg("logits do not form whole rows"));
        }
        let mut data = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(classes) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
            if !max.is_finite() {
                return Err(Error::arg("non-finite logits"));
            }
            let exps: Vec<f64> = row.iter().map(|&v| libm::exp(f64::from(v) - max)).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.into_iter().map(|e| e / z));
        }
        Self::new(data, classes)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Column mean, the marginal `p(y)`.
    pub fn marginal(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.classes];
        for row in self.data.chunks_exact(self.classes) {
            for (acc, &p) in m.iter_mut().zip(row) {
                *acc += p;
            }
        }
        let n = self.rows as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Per-sample averages of the three information terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InceptionTerms {
    pub mean_kl: f64,
    pub mean_cross_entropy: f64,
    pub mean_entropy: f64,
}

pub fn inception_terms(p: &ProbMatrix) -> InceptionTerms {
    let marginal = p.marginal();
    let (mut kl, mut ce, mut h) = (0.0, 0.0, 0.0);
    for i in 0..p.rows() {
        for (&pyx, &py) in p.row(i).iter().zip(&marginal) {
            // 0 * log(0 / .) contributes nothing; py > 0 whenever pyx > 0.
            if pyx > 0.0 {
                kl += pyx * libm::log(pyx / py);
                ce -= pyx * libm::log(py);
                h -= pyx * libm::log(pyx);
            }
        }
    }
    let n = p.rows() as f64;
    InceptionTerms { mean_kl: kl / n, mean_cross_entropy: ce / n, mean_entropy: h / n }
}

/// Always within `[1, K]` up to rounding.
pub fn inception_score(p: &ProbMatrix) -> f64 {
    libm::exp(inception_terms(p).mean_kl)
}

/// Generator score minus the score of the test set, both measured with the
/// same evaluation classifier. Positive means the generator beats the test
/// reference.
pub fn diff_is(is_gen: f64, is_test: f64) -> f64 {
    debug_assert!(is_gen >= 1.0 - 1e-9 && is_test >= 1.0 - 1e-9);
    is_gen - is_test
}
