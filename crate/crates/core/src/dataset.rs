//! Labeled image datasets and the train/valid split.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::seed::{rng_for, SeedRole};
use crate::{Error, Result};

/// Per-sample tensor shape `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl SampleShape {
    pub const MNIST: SampleShape = SampleShape::new(1, 28, 28);

    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        SampleShape { channels, height, width }
    }

    /// A flat vector of `dims` features, stored as `(1, 1, dims)`.
    pub const fn flat(dims: usize) -> Self {
        SampleShape::new(1, 1, dims)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Images as `[0,1]` reals in `(N, C, H, W)` order plus one label per image.
///
/// Invariants: labels and samples agree on `N`, every value lies in `[0,1]`,
/// every label is below `num_classes`, and `num_classes >= 2`. `N >= 1` holds
/// for everything except generator output, which may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<f32>,
    labels: Vec<usize>,
    shape: SampleShape,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<f32>,
        labels: Vec<usize>,
        shape: SampleShape,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::arg("dataset must contain at least one sample"));
        }
        Self::new_allow_empty(samples, labels, shape, num_classes)
    }

    /// Like [`LabeledDataset::new`] but accepts `N = 0`. Only sampling from a
    /// generator with an empty label list produces such a dataset.
    pub fn new_allow_empty(
        samples: Vec<f32>,
        labels: Vec<usize>,
        shape: SampleShape,
        num_classes: usize,
    ) -> Result<Self> {
        let ds = LabeledDataset { samples, labels, shape, num_classes };
        ds.validate_allow_empty()?;
        Ok(ds)
    }

    /// Shared validator for every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::arg("dataset must contain at least one sample"));
        }
        self.validate_allow_empty()
    }

    fn validate_allow_empty(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::arg(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.shape.is_empty() {
            return Err(Error::arg("sample shape has a zero dimension"));
        }
        if self.samples.len() != self.labels.len() * self.shape.len() {
            return Err(Error::Inconsistent(format!(
                "{} values do not match {} labels of shape {:?}",
                self.samples.len(),
                self.labels.len(),
                self.shape
            )));
        }
        if let Some(pos) = self.samples.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!(
                "sample value {} at flat index {pos} is outside [0,1]",
                self.samples[pos]
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::arg(format!(
                "label {bad} outside 0..{}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> SampleShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.shape.len();
        &self.samples[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn into_parts(self) -> (Vec<f32>, Vec<usize>) {
        (self.samples, self.labels)
    }

    /// Same data viewed with another per-sample shape of equal size.
    pub fn reshape(mut self, shape: SampleShape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::arg(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Copy of the rows at `indices`, in that order. Empty selections are
    /// allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.shape.len();
        let mut samples = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            samples.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset { samples, labels, shape: self.shape, num_classes: self.num_classes }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    /// Concatenate two datasets with identical shape and class count.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape || self.num_classes != other.num_classes {
            return Err(Error::Inconsistent("cannot concatenate datasets of different layout".into()));
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(LabeledDataset { samples, labels, shape: self.shape, num_classes: self.num_classes })
    }
}

/// The three disjoint subsets every evaluation works with.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSplits {
    pub fn new(train: LabeledDataset, valid: LabeledDataset, test: LabeledDataset) -> Result<Self> {
        for (name, ds) in [("train", &train), ("valid", &valid), ("test", &test)] {
            ds.validate().map_err(|e| Error::Inconsistent(format!("{name} split: {e}")))?;
        }
        if train.num_classes() != valid.num_classes() || train.num_classes() != test.num_classes() {
            return Err(Error::Inconsistent("splits disagree on num_classes".into()));
        }
        if train.shape() != valid.shape() || train.shape() != test.shape() {
            return Err(Error::Inconsistent("splits disagree on sample shape".into()));
        }
        Ok(DatasetSplits { train, valid, test })
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes()
    }
}

/// Index partition used by [`split_dataset`]: a uniform shuffle of `0..n`
/// under `seed`, the last `valid_count` positions going to validation.
pub fn split_indices(n: usize, valid_count: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if valid_count == 0 || valid_count >= n {
        return Err(Error::arg(format!(
            "valid_count must satisfy 0 < valid_count < N (got {valid_count}, N = {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, SeedRole::Split));
    let valid = order.split_off(n - valid_count);
    Ok((order, valid))
}

/// Carve a validation subset out of `source`. Not stratified.
pub fn split_dataset(
    source: &LabeledDataset,
    valid_count: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, valid_idx) = split_indices(source.len(), valid_count, seed)?;
    Ok((source.select(&train_idx), source.select(&valid_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(n: usize) -> LabeledDataset {
        let samples = (0..n).map(|i| i as f32 / n as f32).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        LabeledDataset::new(samples, labels, SampleShape::flat(1), 2).unwrap()
    }

    #[test]
    fn rejects_bad_invariants() {
        let s = SampleShape::flat(2);
        assert!(LabeledDataset::new(vec![], vec![], s, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, 1.5], vec![0], s, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, 1.0], vec![2], s, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0, 1.0], vec![0], s, 1).is_err());
        assert!(LabeledDataset::new(vec![0.0], vec![0], s, 2).is_err());
        assert!(LabeledDataset::new_allow_empty(vec![], vec![], s, 2).is_ok());
    }

    #[test]
    fn zero_valid_count_rejected() {
        assert!(split_dataset(&toy(10), 0, 1).is_err());
        assert!(split_dataset(&toy(10), 10, 1).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_indices(10, 3, 42).unwrap();
        let b = split_indices(10, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 7);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn mnist_sized_split_covers_every_index() {
        let (train, valid) = split_indices(60_000, 5_000, 3).unwrap();
        assert_eq!((train.len(), valid.len()), (55_000, 5_000));
        let mut seen = vec![false; 60_000];
        for i in train.into_iter().chain(valid) {
            assert!(!seen[i], "index {i} appears twice");
            seen[i] = true;
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn split_preserves_class_count() {
        let (train, valid) = split_dataset(&toy(10), 3, 5).unwrap();
        assert_eq!(train.num_classes(), 2);
        assert_eq!(valid.num_classes(), 2);
        train.validate().unwrap();
        valid.validate().unwrap();
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_a_partition(n in 2usize..400, frac in 0.0f64..1.0, seed in any::<u64>()) {
                let valid_count = 1 + ((n - 2) as f64 * frac) as usize;
                let (train, valid) = split_indices(n, valid_count, seed).unwrap();
                prop_assert_eq!(train.len() + valid.len(), n);
                let mut all: Vec<usize> = train.iter().chain(valid.iter()).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
