//! Inception Score and Fréchet distance measured with a dataset-specific
//! classifier instead of an ImageNet network.

use fitcap_core::metrics::{frechet_distance, inception_score, GaussianMoments, ProbMatrix, COVARIANCE_JITTER};
use fitcap_core::LabeledDataset;

use crate::classifier::TrainedClassifier;
use crate::generative::TrainedGenerator;
use crate::{Error, Result};

/// Default sample count for generated-data scores, the size of the test set.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// `n` generated samples with balanced labels `0, 1, .., K-1, 0, ..`.
pub fn generated_dataset(generator: &TrainedGenerator, n: usize, seed: u64) -> Result<LabeledDataset> {
    let labels: Vec<usize> = (0..n).map(|i| i % generator.num_classes).collect();
    generator.sample_labeled(&labels, seed)
}

pub fn dataset_is(clf: &TrainedClassifier, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("inception score of an empty dataset"));
    }
    let p = ProbMatrix::from_logits(&clf.log_probs(data)?, clf.num_classes)?;
    Ok(inception_score(&p))
}

pub fn feature_moments(clf: &TrainedClassifier, data: &LabeledDataset) -> Result<GaussianMoments> {
    let d = clf.architecture.feature_dim();
    if data.len() < 2 * d {
        return Err(Error::arg(format!("{} samples are too few for a {d}-dimensional covariance (need {})", data.len(), 2 * d)));
    }
    Ok(GaussianMoments::from_samples(&clf.feature_activations(data)?, d, COVARIANCE_JITTER)?)
}

pub fn dataset_fid(clf: &TrainedClassifier, a: &LabeledDataset, b: &LabeledDataset) -> Result<f64> {
    Ok(frechet_distance(&feature_moments(clf, a)?, &feature_moments(clf, b)?)?)
}

pub fn adapted_is(generator: &TrainedGenerator, clf: &TrainedClassifier, n_samples: usize, seed: u64) -> Result<f64> {
    dataset_is(clf, &generated_dataset(generator, n_samples, seed)?)
}

pub fn adapted_fid(generator: &TrainedGenerator, clf: &TrainedClassifier, reference: &LabeledDataset, n_samples: usize, seed: u64) -> Result<f64> {
    let d = clf.architecture.feature_dim();
    if n_samples < 2 * d {
        return Err(Error::arg(format!("n_samples = {n_samples} is below 2 x {d}")));
    }
    dataset_fid(clf, reference, &generated_dataset(generator, n_samples, seed)?)
}

/// Adapted IS and FID of a generator plus its IS difference to a test set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorScores {
    pub inception_score: f64,
    pub fid: f64,
    pub diff_is: f64,
}

/// Scores one generator against `reference` (the test set) from a single
/// batch of `n_samples` generated images.
pub fn score_generator(generator: &TrainedGenerator, clf: &TrainedClassifier, reference: &LabeledDataset, n_samples: usize, seed: u64) -> Result<GeneratorScores> {
    let gen = generated_dataset(generator, n_samples, seed)?;
    let is_gen = dataset_is(clf, &gen)?;
    let is_ref = dataset_is(clf, reference)?;
    let fid = dataset_fid(clf, reference, &gen)?;
    Ok(GeneratorScores { inception_score: is_gen, fid, diff_is: fitcap_core::metrics::diff_is(is_gen, is_ref) })
}
