//! The classifier's batch stream: real mini-batches or freshly generated
//! ones, one Bernoulli(tau) draw per batch.

use std::collections::{HashSet, VecDeque};
use std::hash::{DefaultHasher, Hash, Hasher};

use fitcap_core::seed::rng_for;
use fitcap_core::{BatchOrigin, LabeledDataset, MixtureConfig, MixtureSchedule, RealCycle, Rng, SampleShape, SeedRole};

use crate::generative::{gather, TrainedGenerator};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Row-major `(n, C, H, W)`.
    pub samples: Vec<f32>,
    pub labels: Vec<usize>,
    pub origin: BatchOrigin,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Anything a classifier can be trained from.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<Batch>;
    /// Batches that make up one training epoch.
    fn batches_per_epoch(&self) -> usize;
    fn num_classes(&self) -> usize;
}

pub struct MixtureStream<'a> {
    real: &'a LabeledDataset,
    generator: Option<&'a TrainedGenerator>,
    schedule: MixtureSchedule,
    cycle: RealCycle,
    gen_rng: Rng,
    /// Generated batches decoded ahead of use, oldest first.
    ready: VecDeque<(Vec<usize>, Vec<f32>)>,
    audit: Option<HashSet<u64>>,
    repeats: usize,
    generated_batches: usize,
    real_batches: usize,
}

impl<'a> MixtureStream<'a> {
    pub fn new(real: &'a LabeledDataset, generator: Option<&'a TrainedGenerator>, cfg: MixtureConfig) -> Result<Self> {
        cfg.validate()?;
        if real.is_empty() {
            return Err(Error::arg("real training data is empty"));
        }
        match generator {
            None if cfg.tau > 0.0 => return Err(Error::arg(format!("tau = {} needs a generator", cfg.tau))),
            Some(g) if g.num_classes != real.num_classes() || g.shape != real.shape() => {
                return Err(Error::arg("generator and training data disagree on classes or sample shape"));
            }
            _ => {}
        }
        Ok(MixtureStream {
            real,
            generator,
            schedule: MixtureSchedule::new(cfg, real.num_classes())?,
            cycle: RealCycle::new(real.len(), cfg.batch_size, rng_seed_for_cycle(cfg.rng_seed))?,
            gen_rng: rng_for(cfg.rng_seed, SeedRole::GeneratorSampling),
            ready: VecDeque::new(),
            audit: None,
            repeats: 0,
            generated_batches: 0,
            real_batches: 0,
        })
    }

    pub fn shape(&self) -> SampleShape {
        self.real.shape()
    }

    /// Keep a content hash of every generated sample and count repeats.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(HashSet::new());
        self
    }

    /// Generated samples whose exact pixel content was already emitted.
    pub fn repeats(&self) -> usize {
        self.repeats
    }

    pub fn audited_samples(&self) -> usize {
        self.audit.as_ref().map_or(0, HashSet::len)
    }

    pub fn generated_batches(&self) -> usize {
        self.generated_batches
    }

    pub fn real_batches(&self) -> usize {
        self.real_batches
    }

    /// Completed passes over the real data.
    pub fn real_cycles(&self) -> usize {
        self.cycle.completed_cycles()
    }
}

/// Generated batches decoded per generator call. Labels and latents come
/// from their own streams, so the samples do not depend on this.
const PREFETCH_BATCHES: usize = 16;

impl MixtureStream<'_> {
    fn generated(&mut self) -> Result<(Vec<usize>, Vec<f32>)> {
        if self.ready.is_empty() {
            let g = self.generator.expect("checked at construction");
            let bs = self.schedule.config().batch_size;
            let labels = self.schedule.draw_labels(bs * PREFETCH_BATCHES);
            let samples = g.sample_into(&labels, &mut self.gen_rng)?;
            let d = self.real.shape().len();
            for (l, x) in labels.chunks(bs).zip(samples.chunks(bs * d)) {
                self.ready.push_back((l.to_vec(), x.to_vec()));
            }
        }
        Ok(self.ready.pop_front().expect("just filled"))
    }
}

fn rng_seed_for_cycle(seed: u64) -> u64 {
    fitcap_core::derive_seed(seed, SeedRole::Sampler) ^ 0x7265_616c
}

impl BatchSource for MixtureStream<'_> {
    fn next_batch(&mut self) -> Result<Batch> {
        match self.schedule.next_origin() {
            BatchOrigin::Real => {
                let idx = self.cycle.next_indices();
                self.real_batches += 1;
                let labels = idx.iter().map(|&i| self.real.label(i)).collect();
                Ok(Batch { samples: gather(self.real, &idx), labels, origin: BatchOrigin::Real })
            }
            BatchOrigin::Generated => {
                let (labels, samples) = self.generated()?;
                if let Some(seen) = self.audit.as_mut() {
                    for row in samples.chunks_exact(self.real.shape().len()) {
                        let mut h = DefaultHasher::new();
                        row.iter().for_each(|v| v.to_bits().hash(&mut h));
                        if !seen.insert(h.finish()) {
                            self.repeats += 1;
                        }
                    }
                }
                self.generated_batches += 1;
                Ok(Batch { samples, labels, origin: BatchOrigin::Generated })
            }
        }
    }

    fn batches_per_epoch(&self) -> usize {
        self.real.len().div_ceil(self.schedule.config().batch_size)
    }

    fn num_classes(&self) -> usize {
        self.real.num_classes()
    }
}
