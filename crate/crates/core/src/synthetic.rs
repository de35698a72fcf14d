//! Gaussian-blob datasets with known structure, used as oracles for the
//! metric and pipeline tests.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{LabeledDataset, SampleShape};
use crate::seed::{rng_for, SeedRole};
use crate::{Error, Result};

/// `per_class` draws from `N(mean_k, spread^2 I)` for each class `k`,
/// clipped into `[0,1]`. Class means are drawn in `[0.15, 0.85]^dims`,
/// keeping the candidate set with the largest minimum pairwise distance
/// over a fixed number of attempts.
///
/// With `modes > 1` every class is a union of that many blobs whose
/// centers scatter around the class mean with per-coordinate standard
/// deviation `mode_spread`; the draws of a class cycle through its modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticGaussian {
    pub num_classes: usize,
    pub dims: usize,
    pub per_class: usize,
    pub spread: f64,
    pub modes: usize,
    pub mode_spread: f64,
    pub seed: u64,
}

const MEAN_ATTEMPTS: usize = 64;

impl SyntheticGaussian {
    pub fn new(num_classes: usize, dims: usize, per_class: usize, seed: u64) -> Self {
        SyntheticGaussian { num_classes, dims, per_class, spread: 0.05, modes: 1, mode_spread: 0.0, seed }
    }

    pub fn with_modes(mut self, modes: usize, mode_spread: f64) -> Self {
        self.modes = modes;
        self.mode_spread = mode_spread;
        self
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    /// Class means, row-major `(num_classes, dims)`.
    pub fn means(&self) -> Result<Vec<f64>> {
        self.check()?;
        let (k, d) = (self.num_classes, self.dims);
        let mut rng = rng_for(self.seed, SeedRole::Synthetic);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..MEAN_ATTEMPTS {
            let cand: Vec<f64> = (0..k * d).map(|_| rng.random_range(0.15..=0.85)).collect();
            let mut min_dist = f64::INFINITY;
            for a in 0..k {
                for b in a + 1..k {
                    let dist: f64 = (0..d).map(|j| { let t = cand[a * d + j] - cand[b * d + j]; t * t }).sum();
                    min_dist = min_dist.min(dist);
                }
            }
            if best.as_ref().is_none_or(|(m, _)| min_dist > *m) {
                best = Some((min_dist, cand));
            }
        }
        Ok(best.map(|(_, m)| m).unwrap_or_default())
    }

    /// Blob centers, row-major `(num_classes * modes, dims)`; the modes of
    /// class `k` are rows `k * modes .. (k + 1) * modes`.
    pub fn centers(&self) -> Result<Vec<f64>> {
        let means = self.means()?;
        if self.modes == 1 {
            return Ok(means);
        }
        let d = self.dims;
        // A stream of its own, so the class means match the one-mode case.
        let mut rng = rng_for(self.seed.wrapping_add(2), SeedRole::Synthetic);
        let mut centers = Vec::with_capacity(self.num_classes * self.modes * d);
        for class in 0..self.num_classes {
            for _ in 0..self.modes {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    centers.push((means[class * d + j] + self.mode_spread * z).clamp(0.0, 1.0));
                }
            }
        }
        Ok(centers)
    }

    fn check(&self) -> Result<()> {
        if self.num_classes < 2 || self.dims < 1 || self.per_class < 1 {
            return Err(Error::arg(format!(
                "synthetic dataset needs K >= 2, d >= 1, m >= 1 (got K={}, d={}, m={})",
                self.num_classes, self.dims, self.per_class
            )));
        }
        if self.modes == 0 {
            return Err(Error::arg("need at least one mode per class"));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0 && self.mode_spread.is_finite() && self.mode_spread >= 0.0) {
            return Err(Error::arg("spreads must be finite and non-negative"));
        }
        Ok(())
    }

    /// Samples are interleaved by class (`0, 1, .., K-1, 0, 1, ..`).
    pub fn generate(&self) -> Result<LabeledDataset> {
        let centers = self.centers()?;
        let (k, d) = (self.num_classes, self.dims);
        // Offset the stream so sampling does not replay the mean draws.
        let mut rng = rng_for(self.seed.wrapping_add(1), SeedRole::Synthetic);
        let mut samples = Vec::with_capacity(k * self.per_class * d);
        let mut labels = Vec::with_capacity(k * self.per_class);
        for round in 0..self.per_class {
            for class in 0..k {
                let c = (class * self.modes + round % self.modes) * d;
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = (centers[c + j] + self.spread * z).clamp(0.0, 1.0);
                    samples.push(v as f32);
                }
                labels.push(class);
            }
        }
        LabeledDataset::new(samples, labels, SampleShape::flat(d), k)
    }
}

pub fn make_synthetic_gaussian(
    num_classes: usize,
    dims: usize,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    SyntheticGaussian::new(num_classes, dims, per_class, seed).generate()
}
