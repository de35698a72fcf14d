//! Dataset files on disk and the synthetic stand-in.

use std::fs;
use std::path::{Path, PathBuf};

use fitcap_core::idx::dataset_from_idx;
use fitcap_core::{split_indices, DatasetSplits, LabeledDataset, SampleShape, SyntheticGaussian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Images carved from the training file for model selection.
pub const VALID_COUNT: usize = 5_000;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Mnist,
    Fashion,
    /// Gaussian classes reshaped to 28x28, for sanity checks.
    Synthetic,
}

impl DatasetId {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Fashion => "fashion",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

/// Read an IDX image/label file pair. Pixels are scaled into `[0,1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    dataset_from_idx(&images, &labels, None).map_err(|e| match e {
        fitcap_core::Error::Truncated(msg) => {
            let path = if msg.contains("label") { labels_path } else { images_path };
            Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, msg))
        }
        other => Error::Core(other),
    })
}

/// The four standard IDX files expected in `dir`.
pub fn idx_paths(dir: &Path) -> [PathBuf; 4] {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS].map(|f| dir.join(f))
}

/// Train/valid from the training file, test from the test file.
pub fn load_splits(dir: &Path, valid_count: usize, seed: u64) -> Result<DatasetSplits> {
    let (full, test) = load_idx_dir(dir)?;
    split_train(&full, test, valid_count, seed)
}

/// The full training file and the test file of `dir`, with a shared class
/// count.
pub fn load_idx_dir(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let [tri, trl, tei, tel] = idx_paths(dir);
    for p in [&tri, &trl, &tei, &tel] {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file missing")));
        }
    }
    let full = load_idx(&tri, &trl)?;
    let test = load_idx(&tei, &tel)?;
    let k = full.num_classes().max(test.num_classes());
    Ok((with_classes(full, k)?, with_classes(test, k)?))
}

/// Carves `valid_count` images out of `full` with the seed's split.
pub fn split_train(full: &LabeledDataset, test: LabeledDataset, valid_count: usize, seed: u64) -> Result<DatasetSplits> {
    let (train_idx, valid_idx) = split_indices(full.len(), valid_count, seed)?;
    Ok(DatasetSplits::new(full.select(&train_idx), full.select(&valid_idx), test)?)
}

fn with_classes(ds: LabeledDataset, k: usize) -> Result<LabeledDataset> {
    if ds.num_classes() == k {
        return Ok(ds);
    }
    let shape = ds.shape();
    let (s, l) = ds.into_parts();
    Ok(LabeledDataset::new(s, l, shape, k)?)
}

/// Parameters of the synthetic dataset: `classes` Gaussian blobs in
/// 784 dimensions, viewed as 28x28 images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_train")]
    pub train_per_class: usize,
    #[serde(default = "default_held_out")]
    pub valid_per_class: usize,
    #[serde(default = "default_held_out")]
    pub test_per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Blobs per class, scattered around the class mean.
    #[serde(default = "default_modes")]
    pub modes_per_class: usize,
    #[serde(default = "default_spread")]
    pub mode_spread: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    10
}
fn default_train() -> usize {
    500
}
fn default_held_out() -> usize {
    100
}
fn default_spread() -> f64 {
    0.25
}
fn default_modes() -> usize {
    1
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: default_classes(),
            train_per_class: default_train(),
            valid_per_class: default_held_out(),
            test_per_class: default_held_out(),
            spread: default_spread(),
            modes_per_class: default_modes(),
            mode_spread: default_spread(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// One draw per class of `train + valid + test` points, then a uniform
    /// split within each class, so every subset holds exactly the stated
    /// number of points per class.
    pub fn splits(&self) -> Result<DatasetSplits> {
        let per = self.train_per_class + self.valid_per_class + self.test_per_class;
        let all = SyntheticGaussian::new(self.classes, SampleShape::MNIST.len(), per, self.seed)
            .with_spread(self.spread)
            .with_modes(self.modes_per_class, self.mode_spread)
            .generate()?
            .reshape(SampleShape::MNIST)?;
        let held = self.valid_per_class + self.test_per_class;
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..self.classes {
            let members: Vec<usize> = (0..all.len()).filter(|&i| all.label(i) == k).collect();
            let class_seed = self.seed.wrapping_add(k as u64);
            let (tr, ho) = split_indices(members.len(), held, class_seed)?;
            let (va, te) = split_indices(held, self.valid_per_class, class_seed ^ 1)?;
            train.extend(tr.iter().map(|&i| members[i]));
            valid.extend(va.iter().map(|&i| members[ho[i]]));
            test.extend(te.iter().map(|&i| members[ho[i]]));
        }
        for idx in [&mut train, &mut valid, &mut test] {
            idx.sort_unstable();
        }
        Ok(DatasetSplits::new(all.select(&train), all.select(&valid), all.select(&test))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fitcap_core::idx::{encode_images, encode_labels};

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, []).unwrap();
        fs::write(&lab, encode_labels(&[0, 1])).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Io { .. })));
    }

    #[test]
    fn four_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let pixels = [0u8, 255, 255, 0, 255, 255, 255, 255, 0, 0, 0, 0, 255, 0, 0, 255];
        fs::write(&img, encode_images(2, 2, &pixels)).unwrap();
        fs::write(&lab, encode_labels(&[0, 1, 0, 1])).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.samples().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn synthetic_splits_are_sized_and_balanced() {
        let spec = SyntheticSpec { classes: 3, train_per_class: 20, valid_per_class: 5, test_per_class: 5, ..Default::default() };
        let s = spec.splits().unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (60, 15, 15));
        assert_eq!(s.train.shape(), SampleShape::MNIST);
        assert_eq!(s.num_classes(), 3);
        for (subset, per) in [(&s.train, 20), (&s.valid, 5), (&s.test, 5)] {
            for k in 0..3 {
                assert_eq!(subset.labels().iter().filter(|&&l| l == k).count(), per);
            }
        }
    }
}
