//! Across-seed summaries: mean/best/std plus boxplot statistics with
//! 1.5 IQR outlier fences.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (`n - 1`); `None` for a single value.
    pub std: Option<f64>,
    pub best: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Most extreme values still inside the fences.
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    /// Values outside `[q1 - 1.5 IQR, q3 + 1.5 IQR]`, in input order.
    pub outliers: Vec<f64>,
}

impl ScoreSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Quantile of sorted data by inclusive linear interpolation: position
/// `h = (n - 1) p`, interpolating between the neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation, `None` when fewer than two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(libm::sqrt(ss / (values.len() - 1) as f64))
}

pub fn boxplot_stats(values: &[f64]) -> Result<ScoreSummary> {
    if values.is_empty() {
        return Err(Error::arg("boxplot statistics need at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("boxplot statistics need finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lower_fence = q1 - 1.5 * iqr;
    let upper_fence = q3 + 1.5 * iqr;
    let inside = |v: &f64| *v >= lower_fence && *v <= upper_fence;
    let lower_whisker = sorted.iter().copied().find(inside).unwrap_or(q1);
    let upper_whisker = sorted.iter().rev().copied().find(inside).unwrap_or(q3);
    Ok(ScoreSummary {
        values: values.to_vec(),
        mean: mean(values),
        std: sample_std(values),
        best: sorted[sorted.len() - 1],
        median,
        q1,
        q3,
        lower_fence,
        upper_fence,
        lower_whisker,
        upper_whisker,
        outliers: values.iter().copied().filter(|v| !inside(v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_through_eight() {
        // h = 7p: q1 at 1.75 -> 2 + 0.75 = 2.75, median at 3.5 -> 4.5, q3 at 5.25 -> 6.25
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.75, 4.5, 6.25));
        assert!(s.outliers.is_empty());
        assert_eq!(s.best, 8.0);
        assert_eq!(s.mean, 4.5);
        assert_eq!((s.lower_whisker, s.upper_whisker), (1.0, 8.0));
    }

    #[test]
    fn far_value_is_flagged() {
        // q1 = 2, q3 = 4, IQR = 2, upper fence = 7
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.upper_fence, 7.0);
        assert_eq!(s.upper_whisker, 4.0);
        assert_eq!(s.best, 100.0);
    }

    #[test]
    fn single_value_degenerates() {
        let s = boxplot_stats(&[0.42]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.best), (0.42, 0.42, 0.42, 0.42));
        assert_eq!(s.std, None);
    }

    #[test]
    fn empty_or_nan_rejected() {
        assert!(boxplot_stats(&[]).is_err());
        assert!(boxplot_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        // deviations from 2: -1, 0, 1 -> ss = 2 -> var = 1
        assert_eq!(sample_std(&[1.0, 2.0, 3.0]), Some(1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ordering_and_outlier_invariants(values in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
                let s = boxplot_stats(&values).unwrap();
                prop_assert!(s.q1 <= s.median && s.median <= s.q3);
                prop_assert_eq!(s.best, values.iter().copied().fold(f64::MIN, f64::max));
                for o in &s.outliers {
                    prop_assert!(*o < s.q1 - 1.5 * s.iqr() || *o > s.q3 + 1.5 * s.iqr());
                }
            }
        }
    }
}
