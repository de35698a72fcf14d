//! The proxy classifier: training with validation-based early stopping,
//! evaluation, and feature extraction for the Fréchet distance.

pub mod arch;

use fitcap_core::early_stop::{EarlyStopping, Observation, StopReason};
use fitcap_core::seed::{derive_seed, rng_for};
use fitcap_core::{LabeledDataset, SampleShape, SeedRole};
use serde::{Deserialize, Serialize};

pub use arch::{ArchitectureId, FEATURE_LAYERS};

use crate::mixture::BatchSource;
use crate::nn::loss::nll;
use crate::nn::{Adam, Network, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub architecture: ArchitectureId,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl ClassifierConfig {
    pub fn new(architecture: ArchitectureId, seed: u64) -> Self {
        ClassifierConfig { architecture, max_epochs: 200, patience: 50, learning_rate: 1e-3, batch_size: 64, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::arg(format!(
                "need 1 <= patience <= max_epochs (got {} and {})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 || !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::arg("batch_size must be positive and learning_rate a positive number"));
        }
        Ok(())
    }
}

pub struct TrainedClassifier {
    pub architecture: ArchitectureId,
    pub num_classes: usize,
    pub selected_epoch: usize,
    pub valid_accuracy_trace: Vec<f64>,
    net: Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    Patience,
    MaxEpochs,
}

impl From<StopReason> for Stop {
    fn from(r: StopReason) -> Self {
        match r {
            StopReason::Patience => Stop::Patience,
            StopReason::MaxEpochs => Stop::MaxEpochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// `None` when every step of the epoch was skipped.
    pub train_loss: Option<f64>,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub stop_epoch: usize,
    pub stop_reason: Stop,
    /// Steps skipped because the loss or a gradient was not finite.
    pub skipped_steps: usize,
}

impl TrainingLog {
    pub fn failed(&self) -> bool {
        self.skipped_steps > 0
    }
}

/// Rows per inference call during evaluation.
const EVAL_CHUNK: usize = 500;

impl TrainedClassifier {
    /// Wraps a network built by `architecture`.
    pub fn from_network(architecture: ArchitectureId, num_classes: usize, net: Network, selected_epoch: usize, valid_accuracy_trace: Vec<f64>) -> Self {
        TrainedClassifier { architecture, num_classes, selected_epoch, valid_accuracy_trace, net }
    }

    /// A freshly initialised classifier, as training would start from it.
    pub fn untrained(architecture: ArchitectureId, num_classes: usize, seed: u64) -> Self {
        let net = build(architecture, num_classes, seed);
        Self::from_network(architecture, num_classes, net, 0, Vec::new())
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    fn check(&self, data: &LabeledDataset) -> Result<()> {
        if data.shape() != SampleShape::MNIST {
            return Err(Error::arg(format!("classifier expects 1x28x28 samples, got {:?}", data.shape())));
        }
        if data.num_classes() != self.num_classes {
            return Err(Error::arg(format!("data has {} classes, classifier {}", data.num_classes(), self.num_classes)));
        }
        Ok(())
    }

    /// Runs the first `layers` layers in inference mode over `data`.
    fn run(&self, data: &LabeledDataset, layers: usize) -> Result<Vec<f32>> {
        self.check(data)?;
        let d = data.shape().len();
        let mut out = Vec::new();
        for rows in data.samples().chunks(EVAL_CHUNK * d) {
            let x = Tensor::new(vec![rows.len() / d, 1, 28, 28], rows.to_vec());
            out.extend(self.net.infer_prefix(&x, layers).data);
        }
        Ok(out)
    }

    /// Row-wise log-probabilities, `(N, K)`.
    pub fn log_probs(&self, data: &LabeledDataset) -> Result<Vec<f32>> {
        self.run(data, self.net.len())
    }

    pub fn predict(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        let lp = self.log_probs(data)?;
        Ok(Tensor::new(vec![data.len(), self.num_classes], lp).argmax_rows())
    }

    /// Flattened post-layer-2 activations, `(N, feature_dim)`.
    pub fn feature_activations(&self, data: &LabeledDataset) -> Result<Vec<f32>> {
        self.run(data, FEATURE_LAYERS)
    }
}

fn build(architecture: ArchitectureId, num_classes: usize, seed: u64) -> Network {
    let mut rng = rng_for(seed, SeedRole::ClassifierInit);
    architecture.build(num_classes, &mut rng, derive_seed(seed, SeedRole::Dropout)).without_input_grad()
}

pub fn evaluate_accuracy(clf: &TrainedClassifier, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let pred = clf.predict(data)?;
    let hits = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Accuracy restricted to each class; `None` for classes absent from `data`.
pub fn evaluate_per_class(clf: &TrainedClassifier, data: &LabeledDataset) -> Result<Vec<Option<f64>>> {
    let pred = clf.predict(data)?;
    Ok(per_class_accuracy(&pred, data.labels(), clf.num_classes))
}

pub fn per_class_accuracy(pred: &[usize], labels: &[usize], classes: usize) -> Vec<Option<f64>> {
    let mut hits = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (&p, &y) in pred.iter().zip(labels) {
        total[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    hits.iter().zip(&total).map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64)).collect()
}

pub fn train_classifier(source: &mut dyn BatchSource, valid: &LabeledDataset, cfg: &ClassifierConfig) -> Result<(TrainedClassifier, TrainingLog)> {
    if valid.is_empty() {
        return Err(Error::arg("validation set is empty"));
    }
    if valid.num_classes() != source.num_classes() {
        return Err(Error::arg("validation data and batch source disagree on classes"));
    }
    train_classifier_with(source, cfg, |_, clf| evaluate_accuracy(clf, valid))
}

/// The training loop with a caller-supplied validation evaluator, called
/// once per epoch with the 1-based epoch number.
pub fn train_classifier_with(
    source: &mut dyn BatchSource,
    cfg: &ClassifierConfig,
    mut evaluate: impl FnMut(usize, &TrainedClassifier) -> Result<f64>,
) -> Result<(TrainedClassifier, TrainingLog)> {
    cfg.validate()?;
    let k = source.num_classes();
    let mut clf = TrainedClassifier::untrained(cfg.architecture, k, cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate as f32, 0.9, 0.999);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.max_epochs)?;
    let mut best = clf.net.snapshot();
    let mut epochs = Vec::new();
    let mut skipped = 0;
    let per_epoch = source.batches_per_epoch();
    loop {
        let (mut loss_sum, mut steps) = (0.0f64, 0usize);
        for _ in 0..per_epoch {
            let batch = source.next_batch()?;
            let x = Tensor::new(vec![batch.len(), 1, 28, 28], batch.samples);
            let out = clf.net.forward(x, true);
            let (loss, grad) = nll(&out, &batch.labels);
            if !loss.is_finite() {
                skipped += 1;
                continue;
            }
            clf.net.zero_grad();
            clf.net.backward(grad);
            if !clf.net.grads_finite() {
                skipped += 1;
                continue;
            }
            opt.step(&mut clf.net);
            loss_sum += f64::from(loss);
            steps += 1;
        }
        let epoch = epochs.len() + 1;
        let acc = evaluate(epoch, &clf)?;
        epochs.push(EpochLog { train_loss: (steps > 0).then(|| loss_sum / steps as f64), valid_accuracy: acc });
        let obs = stopper.observe(acc);
        if obs.improved() {
            best = clf.net.snapshot();
        }
        if let Observation::Stop { reason, .. } = obs {
            clf.net.restore(&best);
            clf.selected_epoch = stopper.best_epoch().unwrap_or(epoch);
            clf.valid_accuracy_trace = stopper.trace().to_vec();
            let log = TrainingLog { epochs, stop_epoch: epoch, stop_reason: reason.into(), skipped_steps: skipped };
            return Ok((clf, log));
        }
    }
}
