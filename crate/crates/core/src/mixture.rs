//! Scheduling for the real/generated training mixture.
//!
//! Each training batch is generated with probability `tau` and real
//! otherwise: one Bernoulli draw per batch. Real batches walk a shuffled
//! permutation of the training set; a new permutation is drawn when the
//! previous one is exhausted, so every real index appears exactly once per
//! cycle. Generated batches use labels drawn uniformly over the classes.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::seed::{derive_seed, Rng, SeedRole};
use crate::{Error, Result};
use rand::SeedableRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl MixtureConfig {
    pub fn new(tau: f64, batch_size: usize, rng_seed: u64) -> Result<Self> {
        let cfg = MixtureConfig { tau, batch_size, rng_seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::arg(format!("tau must lie in [0,1], got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BatchOrigin {
    Real,
    Generated,
}

/// Shuffled epoch cycle over `0..n`.
#[derive(Debug, Clone)]
pub struct RealCycle {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    cycles: usize,
    rng: Rng,
}

impl RealCycle {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 || batch_size == 0 {
            return Err(Error::arg("real cycle needs n >= 1 and batch_size >= 1"));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Ok(RealCycle { order, cursor: 0, batch_size, cycles: 0, rng })
    }

    /// Indices of the next real batch. The last batch of a cycle may be
    /// short; it is never padded with indices from the next cycle.
    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.cycles += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// Number of completed passes over the data.
    pub fn completed_cycles(&self) -> usize {
        self.cycles
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Per-batch origin decisions and generated label draws.
#[derive(Debug, Clone)]
pub struct MixtureSchedule {
    cfg: MixtureConfig,
    num_classes: usize,
    decisions: Rng,
    labels: Rng,
}

impl MixtureSchedule {
    pub fn new(cfg: MixtureConfig, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        if num_classes < 2 {
            return Err(Error::arg("mixture needs at least two classes"));
        }
        let base = derive_seed(cfg.rng_seed, SeedRole::Sampler);
        Ok(MixtureSchedule {
            cfg,
            num_classes,
            decisions: Rng::seed_from_u64(base),
            labels: Rng::seed_from_u64(base ^ 0x6c61_6265_6c73),
        })
    }

    pub fn config(&self) -> &MixtureConfig {
        &self.cfg
    }

    /// One Bernoulli(tau) draw. `tau = 0` and `tau = 1` are exact and do not
    /// consume randomness.
    pub fn next_origin(&mut self) -> BatchOrigin {
        let tau = self.cfg.tau;
        if tau <= 0.0 {
            BatchOrigin::Real
        } else if tau >= 1.0 {
            BatchOrigin::Generated
        } else if self.decisions.random::<f64>() < tau {
            BatchOrigin::Generated
        } else {
            BatchOrigin::Real
        }
    }

    /// `n` labels drawn uniformly from `0..num_classes`.
    pub fn draw_labels(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.labels.random_range(0..self.num_classes)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn config_validation() {
        assert!(MixtureConfig::new(-0.1, 4, 0).is_err());
        assert!(MixtureConfig::new(1.1, 4, 0).is_err());
        assert!(MixtureConfig::new(0.5, 0, 0).is_err());
        assert!(MixtureConfig::new(0.5, 4, 0).is_ok());
    }

    #[test]
    fn degenerate_taus_are_exact() {
        for (tau, want) in [(0.0, BatchOrigin::Real), (1.0, BatchOrigin::Generated)] {
            let mut s = MixtureSchedule::new(MixtureConfig::new(tau, 8, 3).unwrap(), 10).unwrap();
            assert!((0..1000).all(|_| s.next_origin() == want));
        }
    }

    #[test]
    fn half_mixture_fraction_within_binomial_bound() {
        // sigma = sqrt(0.25 / 10_000) = 0.005; +-4 sigma = [0.48, 0.52]
        let mut s = MixtureSchedule::new(MixtureConfig::new(0.5, 8, 11).unwrap(), 10).unwrap();
        let generated = (0..10_000).filter(|_| s.next_origin() == BatchOrigin::Generated).count();
        let frac = generated as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn generated_labels_are_uniform() {
        let k = 10;
        let n = 20_000;
        let mut s = MixtureSchedule::new(MixtureConfig::new(1.0, 8, 5).unwrap(), k).unwrap();
        let mut counts = vec![0usize; k];
        for l in s.draw_labels(n) {
            counts[l] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = libm::sqrt(p * (1.0 - p) / n as f64);
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - p).abs() <= 5.0 * sigma, "class frequency {f}");
        }
    }

    #[test]
    fn real_cycle_visits_each_index_once_per_pass() {
        let n = 103;
        let mut cycle = RealCycle::new(n, 10, 9).unwrap();
        for pass in 0..3 {
            let mut seen = vec![0usize; n];
            let mut taken = 0;
            while taken < n {
                let b = cycle.next_indices();
                taken += b.len();
                for i in b {
                    seen[i] += 1;
                }
            }
            assert_eq!(taken, n, "pass {pass} overran the cycle");
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
