//! The experiment sweep: baselines per seed, then for every model and seed
//! one generator and one classifier per non-zero tau.
//!
//! Every run is a single-threaded job; `parallel_workers` only sets how
//! many jobs run at once, so results do not depend on it.

mod manifest;
mod record;

pub use manifest::*;
pub use record::*;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fitcap_core::knn::{knn_accuracy, KnnConfig};
use fitcap_core::seed::{derive_seed, SeedRole};
use fitcap_core::{DatasetSplits, LabeledDataset, MixtureConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::{classifier_file_name, generator_file_name, load_classifier, load_generator, save_classifier, save_generator, write_atomic};
use crate::classifier::{evaluate_accuracy, evaluate_per_class, train_classifier, ClassifierConfig, TrainedClassifier};
use crate::data::{load_idx_dir, split_train, DatasetId, SyntheticSpec, VALID_COUNT};
use crate::evaluation::{dataset_fid, dataset_is, score_generator, GeneratorScores};
use crate::generative::{train_generator, GeneratorConfig, TrainedGenerator};
use crate::mixture::{BatchSource, MixtureStream};
use crate::{Error, Result};

pub const RECORDS_DIR: &str = "records";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const REPORT_DIR: &str = "report";
/// Copy of the manifest a sweep ran with, next to its records.
pub const MANIFEST_COPY: &str = "manifest.toml";

#[derive(Debug, Default)]
pub struct RunSummary {
    /// Runs trained in this invocation.
    pub executed: usize,
    /// Runs whose stored record matched the manifest and was kept.
    pub reused: usize,
    /// Every record in the store after the sweep.
    pub records: Vec<RunRecord>,
    pub warnings: Vec<String>,
}

/// Training data of a sweep, read once.
enum DataSource {
    Idx { full: LabeledDataset, test: LabeledDataset },
    Synthetic(DatasetSplits),
}

impl DataSource {
    fn open(m: &ExperimentManifest) -> Result<Self> {
        match (m.dataset, &m.synthetic, &m.data_dir) {
            (DatasetId::Synthetic, Some(spec), _) => Ok(DataSource::Synthetic(spec.splits()?)),
            (_, _, Some(dir)) => {
                let (full, test) = load_idx_dir(dir)?;
                Ok(DataSource::Idx { full, test })
            }
            _ => Err(Error::Config("no data source configured".into())),
        }
    }

    fn splits(&self, seed: u64) -> Result<DatasetSplits> {
        match self {
            DataSource::Idx { full, test } => split_train(full, test.clone(), VALID_COUNT, seed),
            DataSource::Synthetic(s) => Ok(s.clone()),
        }
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    schema: u32,
    dataset: DatasetId,
    synthetic: &'a Option<SyntheticSpec>,
    valid_count: usize,
    classifier: &'a ClassifierConfig,
    tau: f64,
    generator: Option<(&'a GeneratorConfig, Option<usize>)>,
    metrics: &'a MetricsSection,
    knn: &'a KnnSection,
}

/// Hex SHA-256 of everything that shapes one run's result.
pub fn config_hash(m: &ExperimentManifest, seed: u64, tau: f64, generator: Option<(&GeneratorConfig, Option<usize>)>) -> String {
    let input = HashInput {
        schema: RECORD_SCHEMA,
        dataset: m.dataset,
        synthetic: &m.synthetic,
        valid_count: VALID_COUNT,
        classifier: &m.classifier_config(seed),
        tau,
        generator,
        metrics: &m.metrics,
        knn: &m.knn,
    };
    let json = serde_json::to_vec(&input).expect("hash input serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[fitcap] {}", msg.as_ref());
}

struct Sweep<'a> {
    m: &'a ExperimentManifest,
    data: DataSource,
    store: RecordStore,
    ckpt_dir: PathBuf,
    existing: BTreeMap<String, RunRecord>,
}

impl Sweep<'_> {
    fn key(&self, model: &str, seed: u64, tau: f64, generator: Option<(&GeneratorConfig, Option<usize>)>) -> RunKey {
        RunKey {
            dataset: self.m.dataset.as_str().to_string(),
            model: model.to_string(),
            seed,
            tau,
            config_hash: config_hash(self.m, seed, tau, generator),
        }
    }

    fn is_done(&self, key: &RunKey) -> bool {
        self.existing.get(&key.slot()).is_some_and(|r| r.run_key == *key)
    }

    fn classifier_path(&self, model: &str, seed: u64, tau: f64) -> PathBuf {
        self.ckpt_dir.join(classifier_file_name(self.m.dataset.as_str(), model, seed, tau))
    }

    fn persist(&self, record: &RunRecord) -> Result<()> {
        self.store.persist(record)?;
        let acc = record.test_accuracy.map_or("failed".to_string(), |a| format!("{a:.4}"));
        log(format!("{} -> {acc} ({:.0}s)", record.run_key.slot(), record.wall_time_s));
        Ok(())
    }

    /// Trains and scores one classifier on the tau mixture, filling the
    /// accuracy fields of `rec`.
    fn classify(&self, splits: &DatasetSplits, generator: Option<&TrainedGenerator>, rec: &mut RunRecord) -> Result<TrainedClassifier> {
        let (seed, tau) = (rec.run_key.seed, rec.run_key.tau);
        let cfg = self.m.classifier_config(seed);
        let mix = MixtureConfig::new(tau, cfg.batch_size, seed)?;
        let mut stream = MixtureStream::new(&splits.train, generator, mix)?;
        if generator.is_some() {
            stream = stream.with_audit();
        }
        let (clf, log) = train_classifier(&mut stream, &splits.valid, &cfg)?;
        if generator.is_some() {
            rec.stream_audit = Some(StreamAudit { generated: stream.audited_samples() + stream.repeats(), repeats: stream.repeats() });
        }
        if log.skipped_steps > 0 {
            rec.failures.push(RunFailure::Classifier { skipped_steps: log.skipped_steps });
        }
        let acc = evaluate_accuracy(&clf, &splits.test)?;
        rec.test_accuracy = Some(acc);
        rec.per_class_accuracy = evaluate_per_class(&clf, &splits.test)?;
        if tau == 1.0 {
            rec.fitting_capacity = Some(acc);
        }
        rec.classifier_log = Some(log);
        save_classifier(&clf, Some(&cfg), &self.classifier_path(&rec.run_key.model, seed, tau))?;
        if self.m.knn.enabled {
            let train = match generator {
                Some(_) => materialize(&mut MixtureStream::new(&splits.train, generator, mix)?, self.m.knn.max_train)?,
                None => splits.train.clone(),
            };
            let knn = KnnConfig { k: self.m.knn.k, max_train: self.m.knn.max_train, max_test: self.m.knn.max_test };
            rec.knn_accuracy = Some(knn_accuracy(&train, &splits.test, knn)?);
        }
        Ok(clf)
    }

    fn baseline(&self, seed: u64, key: RunKey, reference: bool) -> RunRecord {
        let t = Instant::now();
        let mut rec = RunRecord::new(key, None);
        let result = self.data.splits(seed).and_then(|splits| {
            let clf = self.classify(&splits, None, &mut rec)?;
            if reference && self.m.metrics.enabled {
                rec.reference_is = Some(dataset_is(&clf, &splits.test)?);
                rec.reference_fid = Some(dataset_fid(&clf, &splits.train, &splits.test)?);
            }
            Ok(())
        });
        if let Err(e) = result {
            rec.failures.push(RunFailure::Error { message: e.to_string() });
        }
        rec.wall_time_s = t.elapsed().as_secs_f64();
        rec
    }

    fn generator(&self, entry: &ModelEntry, seed: u64, train: &LabeledDataset) -> Result<TrainedGenerator> {
        let (cfg, limit) = self.m.generator_config(entry, seed);
        let data = match limit {
            Some(n) if n < train.len() => train.head(n),
            _ => train.clone(),
        };
        if cfg.family.is_reference() {
            // Rebuilt from the training data in no time; a checkpoint would
            // only duplicate that data.
            return train_generator(&data, &cfg);
        }
        let path = self.ckpt_dir.join(generator_file_name(self.m.dataset.as_str(), entry.name(), seed, None));
        if path.is_file() {
            match load_generator(&path) {
                Ok(g) if g.config == cfg && g.report.train_samples == data.len() => {
                    log(format!("reusing generator {}", path.display()));
                    return Ok(g);
                }
                Ok(_) => {}
                Err(e) => log(format!("ignoring unreadable generator checkpoint: {e}")),
            }
        }
        log(format!("training {} generator, seed {seed}, {} images", entry.name(), data.len()));
        let g = train_generator(&data, &cfg)?;
        save_generator(&g, &path)?;
        Ok(g)
    }

    /// One model and seed: the generator, its scores and every pending tau.
    fn model_job(&self, entry: &ModelEntry, seed: u64, pending: Vec<RunKey>, evaluator: Option<&TrainedClassifier>) -> Vec<RunRecord> {
        let t = Instant::now();
        let family = Some(entry.family());
        let setup = self.data.splits(seed).and_then(|s| {
            let g = self.generator(entry, seed, &s.train)?;
            Ok((s, g))
        });
        let (splits, generator) = match setup {
            Ok(v) => v,
            Err(e) => {
                let secs = t.elapsed().as_secs_f64();
                return pending
                    .into_iter()
                    .map(|key| {
                        let mut rec = RunRecord::new(key, family);
                        rec.failures.push(RunFailure::Error { message: e.to_string() });
                        rec.wall_time_s = secs;
                        rec
                    })
                    .collect();
            }
        };
        let mut shared = Vec::new();
        shared.extend(generator.report.flags.iter().map(|flag| RunFailure::Generator { flag: flag.clone() }));
        let scores: Option<GeneratorScores> = if self.m.metrics.enabled {
            let scored = evaluator
                .ok_or_else(|| Error::arg("no evaluation classifier: the first seed's baseline is missing"))
                .and_then(|clf| score_generator(&generator, clf, &splits.test, self.m.metrics.samples, derive_seed(seed, SeedRole::Metrics)));
            match scored {
                Ok(s) => Some(s),
                Err(e) => {
                    shared.push(RunFailure::Error { message: format!("generator scores: {e}") });
                    None
                }
            }
        } else {
            None
        };
        pending
            .into_iter()
            .map(|key| {
                let t = Instant::now();
                let mut rec = RunRecord::new(key, family);
                rec.generator_scores = scores;
                rec.generator_report = Some(generator.report.clone());
                rec.failures.extend(shared.iter().cloned());
                if let Err(e) = self.classify(&splits, Some(&generator), &mut rec) {
                    rec.test_accuracy = None;
                    rec.fitting_capacity = None;
                    rec.failures.push(RunFailure::Error { message: e.to_string() });
                }
                rec.wall_time_s = t.elapsed().as_secs_f64();
                if let Err(e) = self.persist(&rec) {
                    log(format!("could not persist {}: {e}", rec.run_key.slot()));
                }
                rec
            })
            .collect()
    }
}

/// Draws batches until `limit` samples (or one epoch's worth, if less) are
/// collected: the training set a classifier on this stream would see.
fn materialize(stream: &mut MixtureStream<'_>, limit: usize) -> Result<LabeledDataset> {
    let (mut samples, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..stream.batches_per_epoch() {
        if labels.len() >= limit {
            break;
        }
        let batch = stream.next_batch()?;
        samples.extend_from_slice(&batch.samples);
        labels.extend_from_slice(&batch.labels);
    }
    let shape = stream.shape();
    let per = shape.len();
    let n = labels.len().min(limit);
    samples.truncate(n * per);
    labels.truncate(n);
    Ok(LabeledDataset::new(samples, labels, shape, stream.num_classes())?)
}

/// Runs `f` over `jobs` on `workers` threads, keeping input order.
fn run_pool<T: Sync, R: Send>(workers: usize, jobs: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let out = f(job);
                slots.lock().expect("result slots")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Runs every record the manifest implies that the store does not already
/// hold with the same configuration hash. Individual run failures are
/// recorded, never raised; errors are startup problems only.
pub fn run_experiment(m: &ExperimentManifest) -> Result<RunSummary> {
    m.validate()?;
    let data = DataSource::open(m)?;
    let store = RecordStore::new(m.output_dir.join(RECORDS_DIR));
    std::fs::create_dir_all(store.dir()).map_err(|e| Error::io(store.dir(), e))?;
    write_atomic(&m.output_dir.join(MANIFEST_COPY), m.to_toml()?.as_bytes())?;
    let loaded = store.load()?;
    let mut summary = RunSummary { warnings: loaded.warnings, ..RunSummary::default() };
    let sweep = Sweep {
        m,
        data,
        store,
        ckpt_dir: m.output_dir.join(CHECKPOINTS_DIR),
        existing: loaded.records.into_iter().map(|r| (r.run_key.slot(), r)).collect(),
    };

    let first_seed = m.seeds[0];
    let baselines: Vec<(u64, RunKey)> = m
        .seeds
        .iter()
        .map(|&seed| (seed, sweep.key(BASELINE, seed, 0.0, None)))
        .filter(|(seed, key)| {
            let done = sweep.is_done(key) && sweep.classifier_path(BASELINE, *seed, 0.0).is_file();
            summary.reused += done as usize;
            !done
        })
        .collect();
    let done = run_pool(m.parallel_workers, &baselines, |(seed, key)| {
        let rec = sweep.baseline(*seed, key.clone(), *seed == first_seed);
        if let Err(e) = sweep.persist(&rec) {
            log(format!("could not persist {}: {e}", rec.run_key.slot()));
        }
    });
    summary.executed += done.len();

    let evaluator = if m.families.is_empty() {
        None
    } else {
        load_classifier(&sweep.classifier_path(BASELINE, first_seed, 0.0)).ok()
    };
    let mut jobs = Vec::new();
    for entry in &m.families {
        for &seed in &m.seeds {
            let (cfg, limit) = m.generator_config(entry, seed);
            let mut pending = Vec::new();
            for &tau in m.tau_grid.iter().filter(|&&t| t > 0.0) {
                let key = sweep.key(entry.name(), seed, tau, Some((&cfg, limit)));
                if sweep.is_done(&key) {
                    summary.reused += 1;
                } else {
                    pending.push(key);
                }
            }
            if !pending.is_empty() {
                jobs.push((entry, seed, pending));
            }
        }
    }
    let done = run_pool(m.parallel_workers, &jobs, |(entry, seed, pending)| sweep.model_job(entry, *seed, pending.clone(), evaluator.as_ref()));
    summary.executed += done.iter().map(Vec::len).sum::<usize>();

    let final_state = sweep.store.load()?;
    summary.records = final_state.records;
    summary.warnings.extend(final_state.warnings);
    summary.warnings.sort();
    summary.warnings.dedup();
    Ok(summary)
}

/// The records directory of a sweep output, or `dir` itself when it
/// already holds records.
pub fn records_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(RECORDS_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}
