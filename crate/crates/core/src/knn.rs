//! Exact k-nearest-neighbour classification, the deterministic control
//! classifier.
//!
//! Distances are squared Euclidean over flattened pixels. Neighbours are
//! ordered by `(distance, train index)`, so equal distances resolve to the
//! lowest train index and repeated calls are bit-identical.

use alloc::vec::Vec;

use crate::dataset::LabeledDataset;
use crate::{Error, Result};

/// Inputs above this size are subsampled with a fixed stride.
pub const DEFAULT_MAX_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
    pub max_train: usize,
    pub max_test: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 1, max_train: DEFAULT_MAX_POINTS, max_test: DEFAULT_MAX_POINTS }
    }
}

/// `limit` evenly strided indices out of `0..n` (all of them when
/// `n <= limit`).
pub fn strided_subsample(n: usize, limit: usize) -> Vec<usize> {
    if n <= limit {
        return (0..n).collect();
    }
    (0..limit).map(|i| i * n / limit).collect()
}

#[inline]
fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    // Eight independent accumulators let the loop vectorize while keeping a
    // fixed summation order.
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            let d = xa[l] - xb[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for j in chunks * 8..a.len() {
        let d = a[j] - b[j];
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

fn vote(neighbours: &[(f32, usize)], train: &LabeledDataset) -> usize {
    let mut counts = alloc::vec![0usize; train.num_classes()];
    for &(_, i) in neighbours {
        counts[train.label(i)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    // Ties go to the class of the nearest tied neighbour.
    neighbours
        .iter()
        .map(|&(_, i)| train.label(i))
        .find(|&l| counts[l] == top)
        .unwrap_or(0)
}

fn predict_one(x: &[f32], train: &LabeledDataset, rows: &[usize], k: usize, skip: Option<usize>) -> usize {
    let mut best: Vec<(f32, usize)> = Vec::with_capacity(k + 1);
    for &i in rows {
        if Some(i) == skip {
            continue;
        }
        let d = squared_distance(x, train.sample(i));
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, bi)| bd < d || (bd == d && bi < i));
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    vote(&best, train)
}

/// Predicted labels for every row of `test` (after subsampling).
pub fn knn_predict(train: &LabeledDataset, test: &LabeledDataset, cfg: KnnConfig) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::arg("kNN needs a non-empty training set"));
    }
    if cfg.k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if train.shape().len() != test.shape().len() {
        return Err(Error::arg("train and test samples differ in size"));
    }
    let train_rows = strided_subsample(train.len(), cfg.max_train);
    let test_rows = strided_subsample(test.len(), cfg.max_test);
    Ok(test_rows
        .iter()
        .map(|&t| predict_one(test.sample(t), train, &train_rows, cfg.k, None))
        .collect())
}

/// Fraction of (subsampled) test rows whose kNN label matches.
pub fn knn_accuracy(train: &LabeledDataset, test: &LabeledDataset, cfg: KnnConfig) -> Result<f64> {
    let preds = knn_predict(train, test, cfg)?;
    if preds.is_empty() {
        return Err(Error::arg("kNN needs a non-empty test set"));
    }
    let test_rows = strided_subsample(test.len(), cfg.max_test);
    let correct = preds.iter().zip(&test_rows).filter(|(&p, &t)| p == test.label(t)).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Leave-one-out 1-NN accuracy over a single dataset.
pub fn leave_one_out_accuracy(ds: &LabeledDataset) -> f64 {
    let rows: Vec<usize> = (0..ds.len()).collect();
    let correct = rows
        .iter()
        .filter(|&&i| predict_one(ds.sample(i), ds, &rows, 1, Some(i)) == ds.label(i))
        .count();
    correct as f64 / ds.len().max(1) as f64
}
