//! The experiment manifest, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ArchitectureId, ClassifierConfig};
use crate::data::{DatasetId, SyntheticSpec};
use crate::generative::{Family, GeneratorConfig};
use crate::{Error, Result};

pub const DEFAULT_TAU_GRID: [f64; 9] = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0];
pub const DEFAULT_SEEDS: [u64; 8] = [0, 1, 2, 3, 4, 5, 6, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub dataset: DatasetId,
    /// Directory holding the four IDX files; relative paths resolve against
    /// the manifest file.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub families: Vec<ModelEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_workers")]
    pub parallel_workers: usize,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub knn: KnnSection,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_tau_grid() -> Vec<f64> {
    DEFAULT_TAU_GRID.to_vec()
}
fn default_workers() -> usize {
    1
}

/// A family name, or a named variant of a family with its own overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Family(Family),
    Variant(ModelVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub name: String,
    pub family: Family,
    #[serde(flatten)]
    pub overrides: GeneratorOverrides,
}

impl ModelEntry {
    pub fn name(&self) -> &str {
        match self {
            ModelEntry::Family(f) => f.as_str(),
            ModelEntry::Variant(v) => &v.name,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelEntry::Family(f) => *f,
            ModelEntry::Variant(v) => v.family,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Train generators on the first `train_limit` training images only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub family_params: BTreeMap<String, f64>,
}

impl GeneratorOverrides {
    fn apply(&self, cfg: &mut GeneratorConfig, limit: &mut Option<usize>) {
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if self.train_limit.is_some() {
            *limit = self.train_limit;
        }
        for (k, v) in &self.family_params {
            cfg.family_params.insert(k.clone(), *v);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSection {
    #[serde(flatten)]
    pub defaults: GeneratorOverrides,
    /// Per-family overrides, keyed by family name.
    #[serde(default)]
    pub overrides: BTreeMap<Family, GeneratorOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_clf_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_max_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    50
}
fn default_clf_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            learning_rate: default_clf_lr(),
            batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Generated samples behind each adapted IS / FID value.
    #[serde(default = "default_metric_samples")]
    pub samples: usize,
}

fn yes() -> bool {
    true
}
fn default_metric_samples() -> usize {
    crate::evaluation::DEFAULT_SAMPLES
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { enabled: true, samples: default_metric_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_knn_limit")]
    pub max_train: usize,
    #[serde(default = "default_knn_limit")]
    pub max_test: usize,
}

fn default_k() -> usize {
    1
}
fn default_knn_limit() -> usize {
    10_000
}

impl Default for KnnSection {
    fn default() -> Self {
        KnnSection { enabled: false, k: default_k(), max_train: default_knn_limit(), max_test: default_knn_limit() }
    }
}

impl ExperimentManifest {
    /// Parses and validates a manifest; relative paths are resolved against
    /// the directory of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.output_dir = base.join(&m.output_dir);
        m.data_dir = m.data_dir.map(|d| base.join(d));
        Ok(m)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ExperimentManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be unique".into());
        }
        if self.tau_grid.is_empty() {
            return bad("tau_grid is empty".into());
        }
        if self.tau_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("tau_grid values must lie in [0,1]".into());
        }
        if self.tau_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("tau_grid must be sorted and unique".into());
        }
        if !self.families.is_empty() && (self.tau_grid[0] != 0.0 || *self.tau_grid.last().unwrap() != 1.0) {
            return bad("tau_grid must contain 0 and 1 to measure fitting capacity".into());
        }
        let mut names: Vec<&str> = self.families.iter().map(ModelEntry::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique".into());
        }
        if names.iter().any(|n| n.is_empty() || *n == BASELINE || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return bad(format!("model names must be non-empty [A-Za-z0-9_-] and not '{BASELINE}'"));
        }
        if self.parallel_workers == 0 {
            return bad("parallel_workers must be at least 1".into());
        }
        match self.dataset {
            DatasetId::Synthetic if self.synthetic.is_none() => return bad("dataset = synthetic needs a [synthetic] section".into()),
            DatasetId::Mnist | DatasetId::Fashion if self.data_dir.is_none() => return bad("data_dir is required for IDX datasets".into()),
            _ => {}
        }
        for entry in &self.families {
            let (cfg, _) = self.generator_config(entry, 0);
            cfg.validate().map_err(|e| Error::Config(format!("model {}: {e}", entry.name())))?;
        }
        self.classifier_config(0).validate().map_err(|e| Error::Config(format!("classifier: {e}")))?;
        Ok(())
    }

    pub fn architecture(&self) -> ArchitectureId {
        match self.dataset {
            DatasetId::Fashion => ArchitectureId::FashionCnn,
            DatasetId::Mnist | DatasetId::Synthetic => ArchitectureId::MnistCnn,
        }
    }

    /// Effective generator config and training-subset size for a model and
    /// seed: family defaults, then `[generator]`, then
    /// `[generator.overrides.<family>]`, then the variant's own overrides.
    pub fn generator_config(&self, entry: &ModelEntry, seed: u64) -> (GeneratorConfig, Option<usize>) {
        let family = entry.family();
        let mut cfg = GeneratorConfig::new(family, seed);
        let mut limit = None;
        self.generator.defaults.apply(&mut cfg, &mut limit);
        if let Some(o) = self.generator.overrides.get(&family) {
            o.apply(&mut cfg, &mut limit);
        }
        if let ModelEntry::Variant(v) = entry {
            v.overrides.apply(&mut cfg, &mut limit);
        }
        (cfg, limit)
    }

    pub fn classifier_config(&self, seed: u64) -> ClassifierConfig {
        let c = &self.classifier;
        ClassifierConfig {
            architecture: self.architecture(),
            max_epochs: c.max_epochs,
            patience: c.patience,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            seed,
        }
    }

    /// Records the manifest implies: one baseline per seed plus one record
    /// per model, seed and non-zero tau.
    pub fn expected_records(&self) -> usize {
        let taus = self.tau_grid.iter().filter(|&&t| t > 0.0).count();
        self.seeds.len() * (1 + self.families.len() * taus)
    }
}

/// Model name of the shared real-data runs.
pub const BASELINE: &str = "baseline";
