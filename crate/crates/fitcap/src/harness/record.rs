//! Run records and the on-disk results store: one JSON document per run,
//! written atomically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;
use crate::classifier::TrainingLog;
use crate::evaluation::GeneratorScores;
use crate::generative::{FailureFlag, Family, TrainingReport};
use crate::{Error, Result};

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub dataset: String,
    /// Model name from the manifest, or `baseline`.
    pub model: String,
    pub seed: u64,
    pub tau: f64,
    /// Hash of the effective configuration behind this run.
    pub config_hash: String,
}

impl RunKey {
    /// Identity of the slot a record fills; the config hash is excluded so a
    /// changed configuration replaces the old record.
    pub fn slot(&self) -> String {
        format!("{}_{}_{}_tau{:.3}", self.dataset, self.model, self.seed, self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RunFailure {
    Generator { flag: FailureFlag },
    /// Classifier steps skipped on a non-finite loss or gradient.
    Classifier { skipped_steps: usize },
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamAudit {
    pub generated: usize,
    /// Samples whose exact pixel content had already been streamed.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub run_key: RunKey,
    /// `None` only when the run failed before a classifier existed.
    pub family: Option<Family>,
    pub test_accuracy: Option<f64>,
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Set on `tau = 1` runs: the fitting capacity of the generator.
    pub fitting_capacity: Option<f64>,
    pub generator_scores: Option<GeneratorScores>,
    /// Baseline runs: IS of the test set and FID between train and test.
    pub reference_is: Option<f64>,
    pub reference_fid: Option<f64>,
    pub knn_accuracy: Option<f64>,
    /// Generated samples the classifier was shown, checked for repeats.
    #[serde(default)]
    pub stream_audit: Option<StreamAudit>,
    pub classifier_log: Option<TrainingLog>,
    pub generator_report: Option<TrainingReport>,
    pub failures: Vec<RunFailure>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn new(run_key: RunKey, family: Option<Family>) -> Self {
        RunRecord {
            schema: RECORD_SCHEMA,
            run_key,
            family,
            test_accuracy: None,
            per_class_accuracy: Vec::new(),
            fitting_capacity: None,
            generator_scores: None,
            reference_is: None,
            reference_fid: None,
            knn_accuracy: None,
            stream_audit: None,
            classifier_log: None,
            generator_report: None,
            failures: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn is_baseline(&self) -> bool {
        self.run_key.model == super::BASELINE
    }

    fn check(&self) -> Result<()> {
        if self.schema != RECORD_SCHEMA {
            return Err(Error::Store(format!("unsupported record schema {}", self.schema)));
        }
        match self.test_accuracy {
            Some(a) if !(0.0..=1.0).contains(&a) => Err(Error::Store(format!("test accuracy {a} outside [0,1]"))),
            None if !self.failed() => Err(Error::Store("record without accuracy carries no failure".into())),
            _ => Ok(()),
        }
    }
}

pub struct RecordStore {
    dir: PathBuf,
}

/// Records read from a store plus files that could not be parsed.
#[derive(Debug, Default)]
pub struct LoadedRecords {
    pub records: Vec<RunRecord>,
    pub warnings: Vec<String>,
}

impl RecordStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RecordStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &RunKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.slot()))
    }

    pub fn persist(&self, record: &RunRecord) -> Result<()> {
        record.check()?;
        let json = serde_json::to_vec_pretty(record).map_err(|e| Error::Store(e.to_string()))?;
        write_atomic(&self.path_for(&record.run_key), &json)
    }

    /// Every parseable record. Unparseable files are reported in
    /// `warnings`; two records for the same run key make the store
    /// inconsistent.
    pub fn load(&self) -> Result<LoadedRecords> {
        let mut out = LoadedRecords::default();
        if !self.dir.exists() {
            return Ok(out);
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| Error::io(&self.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
        for path in paths {
            let parsed = fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<RunRecord>(&b).map_err(|e| e.to_string()))
                .and_then(|r| r.check().map(|_| r).map_err(|e| e.to_string()));
            match parsed {
                Ok(r) => {
                    let slot = r.run_key.slot();
                    if let Some(prev) = seen.insert(slot.clone(), path.clone()) {
                        return Err(Error::Store(format!("run key {slot} appears in both {} and {}", prev.display(), path.display())));
                    }
                    out.records.push(r);
                }
                Err(e) => out.warnings.push(format!("{}: {e}", path.display())),
            }
        }
        Ok(out)
    }
}
