//! Patience-based early stopping with best-epoch selection.
//!
//! Epochs are 1-based. An epoch improves only if its validation accuracy is
//! strictly greater than the best so far, so ties keep the earliest epoch.
//! Training stops once `patience` consecutive epochs fail to improve, or at
//! `max_epochs`.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    /// Keep training; `improved` says whether this epoch is the new best.
    Continue { improved: bool },
    Stop { reason: StopReason, improved: bool },
}

impl Observation {
    pub fn improved(&self) -> bool {
        match *self {
            Observation::Continue { improved } | Observation::Stop { improved, .. } => improved,
        }
    }

    pub fn should_stop(&self) -> bool {
        matches!(self, Observation::Stop { .. })
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    max_epochs: usize,
    trace: Vec<f64>,
    best_epoch: Option<usize>,
    since_best: usize,
    stopped: Option<StopReason>,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Result<Self> {
        if max_epochs == 0 || patience == 0 || patience > max_epochs {
            return Err(Error::arg(format!(
                "need 1 <= patience <= max_epochs (got patience={patience}, max_epochs={max_epochs})"
            )));
        }
        Ok(EarlyStopping {
            patience,
            max_epochs,
            trace: Vec::new(),
            best_epoch: None,
            since_best: 0,
            stopped: None,
        })
    }

    /// Record the validation accuracy of the next epoch.
    pub fn observe(&mut self, valid_accuracy: f64) -> Observation {
        debug_assert!(self.stopped.is_none(), "observe called after stop");
        self.trace.push(valid_accuracy);
        let epoch = self.trace.len();
        let improved = match self.best_epoch {
            None => !valid_accuracy.is_nan(),
            Some(b) => valid_accuracy > self.trace[b - 1],
        };
        if improved {
            self.best_epoch = Some(epoch);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let reason = if self.since_best >= self.patience {
            Some(StopReason::Patience)
        } else if epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                self.stopped = Some(reason);
                Observation::Stop { reason, improved }
            }
            None => Observation::Continue { improved },
        }
    }

    /// Best epoch so far (1-based), `None` before any finite observation.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.trace[e - 1])
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn epochs_seen(&self) -> usize {
        self.trace.len()
    }
}

/// Earliest argmax of a trace, 1-based.
pub fn earliest_argmax(trace: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in trace.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > trace[b]) {
            best = Some(i);
        }
    }
    best.map(|b| b + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(trace: impl Iterator<Item = f64>, patience: usize, max_epochs: usize) -> (usize, StopReason, usize) {
        let mut es = EarlyStopping::new(patience, max_epochs).unwrap();
        for v in trace {
            if let Observation::Stop { reason, .. } = es.observe(v) {
                return (es.epochs_seen(), reason, es.best_epoch().unwrap());
            }
        }
        panic!("trace exhausted before stop");
    }

    #[test]
    fn flat_after_epoch_ten_stops_at_sixty() {
        let trace = (1..=500).map(|e| if e <= 10 { e as f64 / 100.0 } else { 0.10 });
        assert_eq!(drive(trace, 50, 200), (60, StopReason::Patience, 10));
    }

    #[test]
    fn strictly_improving_runs_to_max_epochs() {
        let trace = (1..=500).map(|e| e as f64 / 1000.0);
        assert_eq!(drive(trace, 50, 200), (200, StopReason::MaxEpochs, 200));
    }

    #[test]
    fn ties_keep_earliest_best() {
        let trace = [0.5, 0.7, 0.7, 0.6, 0.7].into_iter().chain(core::iter::repeat(0.1));
        let (_, _, best) = drive(trace, 3, 100);
        assert_eq!(best, 2);
        assert_eq!(earliest_argmax(&[0.5, 0.7, 0.7, 0.6, 0.7]), Some(2));
    }

    #[test]
    fn invalid_configuration_rejected() {
        assert!(EarlyStopping::new(0, 10).is_err());
        assert!(EarlyStopping::new(11, 10).is_err());
        assert!(EarlyStopping::new(1, 0).is_err());
    }

    #[test]
    fn nan_never_improves() {
        let mut es = EarlyStopping::new(2, 10).unwrap();
        assert!(!es.observe(f64::NAN).improved());
        assert!(es.observe(0.3).improved());
        assert!(!es.observe(f64::NAN).improved());
        assert_eq!(es.best_epoch(), Some(2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn selected_epoch_is_earliest_argmax_and_not_after_stop(
                trace in proptest::collection::vec(0.0f64..1.0, 1..120),
                patience in 1usize..20,
            ) {
                let max_epochs = trace.len().max(patience);
                let mut es = EarlyStopping::new(patience, max_epochs).unwrap();
                for &v in &trace {
                    if es.observe(v).should_stop() { break; }
                }
                let seen = es.epochs_seen();
                let best = es.best_epoch().unwrap();
                prop_assert!(best <= seen);
                prop_assert!(seen <= max_epochs);
                prop_assert_eq!(Some(best), earliest_argmax(&trace[..seen]));
            }
        }
    }
}
