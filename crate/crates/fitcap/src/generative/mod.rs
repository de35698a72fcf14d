//! The generator families, per-class ensembles and reference generators
//! behind one labeled sampling interface.

pub mod arch;
mod train;

use std::collections::BTreeMap;

use fitcap_core::seed::rng_for;
use fitcap_core::{LabeledDataset, Rng, SampleShape, SeedRole};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::nn::{normal, Network, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Vae,
    Cvae,
    Gan,
    Cgan,
    Wgan,
    Began,
    /// Emits stored training pairs of the requested class.
    Replay,
    /// Uniform pixel noise.
    UniformNoise,
    /// Stored training images with labels unrelated to their content.
    LabelScramble,
}

impl Family {
    pub const TRAINED: [Family; 6] = [Family::Vae, Family::Cvae, Family::Gan, Family::Cgan, Family::Wgan, Family::Began];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Vae => "vae",
            Family::Cvae => "cvae",
            Family::Gan => "gan",
            Family::Cgan => "cgan",
            Family::Wgan => "wgan",
            Family::Began => "began",
            Family::Replay => "replay",
            Family::UniformNoise => "uniform_noise",
            Family::LabelScramble => "label_scramble",
        }
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, Family::Cvae | Family::Cgan)
    }

    /// Unconditional families, trained as one generator per class.
    pub fn is_ensemble(self) -> bool {
        matches!(self, Family::Vae | Family::Gan | Family::Wgan | Family::Began)
    }

    pub fn is_reference(self) -> bool {
        matches!(self, Family::Replay | Family::UniformNoise | Family::LabelScramble)
    }

    fn is_adversarial(self) -> bool {
        matches!(self, Family::Gan | Family::Cgan | Family::Wgan | Family::Began)
    }

    /// Family-specific knobs with their defaults.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        let beta1 = if self.is_adversarial() { 0.5 } else { 0.9 };
        p.insert("beta1".to_string(), beta1);
        p.insert("beta2".to_string(), 0.999);
        match self {
            Family::Wgan => {
                p.insert("clip".to_string(), 0.01);
                p.insert("critic_steps".to_string(), 5.0);
            }
            Family::Began => {
                p.insert("gamma".to_string(), 0.75);
                p.insert("lambda_k".to_string(), 0.001);
            }
            _ => {}
        }
        p
    }

    pub fn default_learning_rate(self) -> f64 {
        if self.is_adversarial() {
            2e-4
        } else {
            1e-3
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = Family::TRAINED.into_iter().chain([Family::Replay, Family::UniformNoise, Family::LabelScramble]);
        all.into_iter().find(|f| f.as_str() == s).ok_or_else(|| Error::arg(format!("unknown family '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: Family,
    pub latent_dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub conditional: bool,
    pub family_params: BTreeMap<String, f64>,
}

impl GeneratorConfig {
    pub fn new(family: Family, seed: u64) -> Self {
        GeneratorConfig {
            family,
            latent_dim: 20,
            epochs: 25,
            seed,
            learning_rate: family.default_learning_rate(),
            batch_size: 64,
            conditional: family.is_conditional(),
            family_params: family.default_params(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("latent_dim, epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::arg(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.conditional != self.family.is_conditional() {
            return Err(Error::arg(format!("conditional={} does not match family {}", self.conditional, self.family)));
        }
        for (key, lo, hi) in [("beta1", 0.0, 1.0), ("beta2", 0.0, 1.0), ("gamma", 0.0, 1.0), ("lambda_k", 0.0, 1.0)] {
            if let Some(&v) = self.family_params.get(key) {
                if !(lo..hi).contains(&v) && !(key == "gamma" && v == 1.0) {
                    return Err(Error::arg(format!("{key} = {v} out of range")));
                }
            }
        }
        if self.family_params.get("clip").is_some_and(|&c| !(c > 0.0)) {
            return Err(Error::arg("clip must be positive"));
        }
        if self.family_params.get("critic_steps").is_some_and(|&c| !(c >= 1.0 && c.fract() == 0.0)) {
            return Err(Error::arg("critic_steps must be a positive integer"));
        }
        Ok(())
    }

    /// A family parameter, falling back to the family default.
    pub fn param(&self, key: &str) -> f64 {
        match self.family_params.get(key) {
            Some(&v) => v,
            None => self.family.default_params().get(key).copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureFlag {
    /// Training stopped in `epoch` on a non-finite loss or gradient; the
    /// weights from the start of that epoch were kept.
    NonFinite { epoch: usize, class: Option<usize> },
    /// Mean per-pixel variance across a probe batch fell below the collapse
    /// threshold.
    Collapsed { variance: f64, class: Option<usize> },
}

/// Per-pixel variance below which a probe batch counts as collapsed.
pub const COLLAPSE_VARIANCE: f64 = 1e-6;
const PROBE_SAMPLES: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training loss of each completed epoch.
    pub loss_trace: Vec<f64>,
    /// Discriminator/critic loss (adversarial) or KL term (VAE) per epoch.
    pub aux_trace: Vec<f64>,
    pub flags: Vec<FailureFlag>,
    /// Training images the generator (all members together) was fit on.
    #[serde(default)]
    pub train_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<TrainingReport>,
}

impl TrainingReport {
    pub fn failed(&self) -> bool {
        !self.flags.is_empty()
    }
}

pub enum GeneratorModel {
    /// Input is latent noise concatenated with a one-hot label.
    Conditional(Network),
    /// One unconditional network per class.
    Ensemble(Vec<Network>),
    Replay(LabeledDataset),
    UniformNoise,
    LabelScramble(LabeledDataset),
}

pub struct TrainedGenerator {
    pub config: GeneratorConfig,
    pub num_classes: usize,
    pub shape: SampleShape,
    pub model: GeneratorModel,
    pub report: TrainingReport,
    class_index: Vec<Vec<usize>>,
}

/// Rows sent through a generator network per inference call.
const SAMPLE_CHUNK: usize = 128;

impl TrainedGenerator {
    pub fn new(config: GeneratorConfig, num_classes: usize, shape: SampleShape, model: GeneratorModel, report: TrainingReport) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::arg("a generator needs at least two classes"));
        }
        let class_index = match &model {
            GeneratorModel::Replay(data) => {
                let idx: Vec<Vec<usize>> = (0..num_classes).map(|k| data.class_indices(k)).collect();
                if let Some(k) = idx.iter().position(Vec::is_empty) {
                    return Err(Error::arg(format!("replay data has no samples of class {k}")));
                }
                idx
            }
            GeneratorModel::Ensemble(nets) if nets.len() != num_classes => {
                return Err(Error::arg(format!("{} ensemble members for {num_classes} classes", nets.len())));
            }
            _ => Vec::new(),
        };
        Ok(TrainedGenerator { config, num_classes, shape, model, report, class_index })
    }

    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Sub-generator `k` of a per-class ensemble.
    pub fn ensemble_member(&self, k: usize) -> Option<&Network> {
        match &self.model {
            GeneratorModel::Ensemble(nets) => nets.get(k),
            _ => None,
        }
    }

    /// Samples for `labels`, row-major. Latent noise is drawn for all rows in
    /// label order before any network runs.
    pub fn sample_into(&self, labels: &[usize], rng: &mut Rng) -> Result<Vec<f32>> {
        Ok(self.sample_traced(labels, rng)?.0)
    }

    /// Like [`TrainedGenerator::sample_into`], also returning which source
    /// produced each row: the ensemble member, or the stored sample index for
    /// replay-style generators. Other generators report the label itself.
    pub fn sample_traced(&self, labels: &[usize], rng: &mut Rng) -> Result<(Vec<f32>, Vec<usize>)> {
        if let Some(&y) = labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::arg(format!("label {y} out of range for {} classes", self.num_classes)));
        }
        let n = labels.len();
        let d = self.shape.len();
        let latent = self.config.latent_dim;
        match &self.model {
            GeneratorModel::Conditional(net) => {
                let z = normal(n * latent, 0.0, 1.0, rng);
                let input = concat_one_hot(&z, latent, labels, self.num_classes);
                let width = latent + self.num_classes;
                let mut out = Vec::with_capacity(n * d);
                for rows in input.chunks(SAMPLE_CHUNK * width) {
                    out.extend(net.infer(&Tensor::new(vec![rows.len() / width, width], rows.to_vec())).data);
                }
                Ok((out, labels.to_vec()))
            }
            GeneratorModel::Ensemble(nets) => {
                let z = normal(n * latent, 0.0, 1.0, rng);
                let mut out = vec![0.0f32; n * d];
                for (k, net) in nets.iter().enumerate() {
                    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
                    for chunk in pos.chunks(SAMPLE_CHUNK) {
                        let rows: Vec<f32> = chunk.iter().flat_map(|&i| z[i * latent..(i + 1) * latent].iter().copied()).collect();
                        let x = net.infer(&Tensor::new(vec![chunk.len(), latent], rows));
                        for (j, &i) in chunk.iter().enumerate() {
                            out[i * d..(i + 1) * d].copy_from_slice(x.item(j));
                        }
                    }
                }
                Ok((out, labels.to_vec()))
            }
            GeneratorModel::Replay(data) => {
                let picks: Vec<usize> = labels
                    .iter()
                    .map(|&y| {
                        let idx = &self.class_index[y];
                        idx[rng.random_range(0..idx.len())]
                    })
                    .collect();
                Ok((gather(data, &picks), picks))
            }
            GeneratorModel::UniformNoise => Ok(((0..n * d).map(|_| rng.random::<f32>()).collect(), labels.to_vec())),
            GeneratorModel::LabelScramble(data) => {
                let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.len())).collect();
                Ok((gather(data, &picks), picks))
            }
        }
    }

    /// `labels.len()` samples paired with exactly those labels, deterministic
    /// in `seed`.
    pub fn sample_labeled(&self, labels: &[usize], seed: u64) -> Result<LabeledDataset> {
        let mut rng = rng_for(seed, SeedRole::GeneratorSampling);
        let samples = self.sample_into(labels, &mut rng)?;
        Ok(LabeledDataset::new_allow_empty(samples, labels.to_vec(), self.shape, self.num_classes)?)
    }

    /// Flags classes whose probe samples barely vary.
    fn check_collapse(&mut self) {
        if self.config.family.is_reference() {
            return;
        }
        let mut rng = rng_for(self.config.seed, SeedRole::GeneratorSampling);
        for k in 0..self.num_classes {
            let labels = vec![k; PROBE_SAMPLES];
            let Ok(x) = self.sample_into(&labels, &mut rng) else { continue };
            let variance = mean_pixel_variance(&x, self.shape.len());
            if !(variance >= COLLAPSE_VARIANCE) {
                let flag = FailureFlag::Collapsed { variance, class: Some(k) };
                match &self.model {
                    GeneratorModel::Ensemble(_) => {
                        if let Some(m) = self.report.members.get_mut(k) {
                            m.flags.push(flag.clone());
                        }
                        self.report.flags.push(flag);
                    }
                    _ => self.report.flags.push(flag),
                }
            }
        }
    }
}

/// Mean over pixels of the across-sample variance (population).
pub fn mean_pixel_variance(samples: &[f32], d: usize) -> f64 {
    let n = samples.len() / d;
    if n == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0f64; d];
    for row in samples.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = 0.0;
    for row in samples.chunks_exact(d) {
        for (m, &v) in mean.iter().zip(row) {
            let t = f64::from(v) - m;
            var += t * t;
        }
    }
    var / (n * d) as f64
}

pub(crate) fn gather(data: &LabeledDataset, idx: &[usize]) -> Vec<f32> {
    let d = data.shape().len();
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(data.sample(i));
    }
    out
}

/// Rows of `width` values followed by a one-hot label.
pub(crate) fn concat_one_hot(rows: &[f32], width: usize, labels: &[usize], classes: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(labels.len() * (width + classes));
    for (row, &y) in rows.chunks_exact(width).zip(labels) {
        out.extend_from_slice(row);
        out.extend((0..classes).map(|c| if c == y { 1.0 } else { 0.0 }));
    }
    out
}

pub fn train_generator(train_data: &LabeledDataset, config: &GeneratorConfig) -> Result<TrainedGenerator> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::arg("generator training data is empty"));
    }
    let k = train_data.num_classes();
    let family = config.family;
    if family.is_ensemble() {
        return train_classwise_ensemble(train_data, config);
    }
    let model = match family {
        Family::Replay => GeneratorModel::Replay(train_data.clone()),
        Family::UniformNoise => GeneratorModel::UniformNoise,
        Family::LabelScramble => GeneratorModel::LabelScramble(train_data.clone()),
        _ => {
            require_image_shape(train_data)?;
            let mut rng = rng_for(config.seed, SeedRole::GeneratorInit);
            let (net, mut report) = train::train_network(train_data, config, Some(k), &mut rng);
            report.train_samples = train_data.len();
            let mut g = TrainedGenerator::new(config.clone(), k, train_data.shape(), GeneratorModel::Conditional(net), report)?;
            g.check_collapse();
            return Ok(g);
        }
    };
    let report = TrainingReport { train_samples: train_data.len(), ..TrainingReport::default() };
    TrainedGenerator::new(config.clone(), k, train_data.shape(), model, report)
}

/// One unconditional generator per class, each trained on its class subset.
pub fn train_classwise_ensemble(train_data: &LabeledDataset, config: &GeneratorConfig) -> Result<TrainedGenerator> {
    config.validate()?;
    if !config.family.is_ensemble() {
        return Err(Error::arg(format!("{} is not an unconditional trained family", config.family)));
    }
    require_image_shape(train_data)?;
    let k = train_data.num_classes();
    let mut nets = Vec::with_capacity(k);
    let mut report = TrainingReport { train_samples: train_data.len(), ..TrainingReport::default() };
    for class in 0..k {
        let idx = train_data.class_indices(class);
        if idx.is_empty() {
            return Err(Error::arg(format!("class {class} has no training samples")));
        }
        let subset = train_data.select(&idx);
        let mut rng = rng_for(config.seed, SeedRole::GeneratorClass(class));
        let (net, mut member) = train::train_network(&subset, config, None, &mut rng);
        member.train_samples = subset.len();
        for f in &mut member.flags {
            if let FailureFlag::NonFinite { class: c, .. } = f {
                *c = Some(class);
            }
        }
        report.flags.extend(member.flags.iter().cloned());
        report.members.push(member);
        nets.push(net);
    }
    let epochs = report.members.iter().map(|m| m.loss_trace.len()).min().unwrap_or(0);
    let mean_at = |trace: fn(&TrainingReport) -> &Vec<f64>, e: usize| {
        report.members.iter().map(|m| trace(m)[e]).sum::<f64>() / k as f64
    };
    report.loss_trace = (0..epochs).map(|e| mean_at(|m| &m.loss_trace, e)).collect();
    report.aux_trace = (0..epochs).map(|e| mean_at(|m| &m.aux_trace, e)).collect();
    let mut g = TrainedGenerator::new(config.clone(), k, train_data.shape(), GeneratorModel::Ensemble(nets), report)?;
    g.check_collapse();
    Ok(g)
}

fn require_image_shape(data: &LabeledDataset) -> Result<()> {
    if data.shape() != SampleShape::MNIST {
        return Err(Error::arg(format!("generator networks need 1x28x28 images, got {:?}", data.shape())));
    }
    Ok(())
}
