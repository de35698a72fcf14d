//! Cross-metric comparison: z-scores over a set of models, with FID
//! negated first so that higher is better for every metric.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    FittingCapacity,
    InceptionScore,
    DiffInceptionScore,
    /// Lower is better; negated before normalization.
    Frechet,
}

impl MetricKind {
    pub fn lower_is_better(self) -> bool {
        matches!(self, MetricKind::Frechet)
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::FittingCapacity => "fitting_capacity",
            MetricKind::InceptionScore => "inception_score",
            MetricKind::DiffInceptionScore => "diff_is",
            MetricKind::Frechet => "fid",
        }
    }
}

/// `z = (v - mean) / std` with the population standard deviation.
pub fn normalize_scores(values: &BTreeMap<String, f64>, kind: MetricKind) -> Result<BTreeMap<String, f64>> {
    if values.len() < 2 {
        return Err(Error::arg("normalization needs at least two models"));
    }
    if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::arg(format!("model {name} has non-finite score {v}")));
    }
    let sign = if kind.lower_is_better() { -1.0 } else { 1.0 };
    let n = values.len() as f64;
    let mean = values.values().map(|v| sign * v).sum::<f64>() / n;
    let var = values.values().map(|v| (sign * v - mean) * (sign * v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std <= f64::EPSILON * (1.0 + mean.abs()) {
        return Err(Error::Degenerate(format!("{} scores have zero variance", kind.name())));
    }
    Ok(values.iter().map(|(k, v)| (k.clone(), (sign * v - mean) / std)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec::Vec;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn three_model_hand_case() {
        // mean 95, population variance 50/3
        let z = normalize_scores(&map(&[("A", 90.0), ("B", 95.0), ("C", 100.0)]), MetricKind::FittingCapacity).unwrap();
        let s = libm::sqrt(50.0 / 3.0);
        assert!((z["A"] + 5.0 / s).abs() < 1e-12);
        assert!(z["B"].abs() < 1e-12);
        assert!((z["C"] - 1.2247).abs() < 5e-5);
    }

    #[test]
    fn fid_is_negated() {
        let z = normalize_scores(&map(&[("A", 10.0), ("B", 20.0)]), MetricKind::Frechet).unwrap();
        assert!((z["A"] - 1.0).abs() < 1e-12);
        assert!((z["B"] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let err = normalize_scores(&map(&[("A", 3.0), ("B", 3.0)]), MetricKind::InceptionScore).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(normalize_scores(&map(&[("A", 3.0)]), MetricKind::InceptionScore).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kinds() -> impl Strategy<Value = MetricKind> {
            prop_oneof![
                Just(MetricKind::FittingCapacity),
                Just(MetricKind::InceptionScore),
                Just(MetricKind::DiffInceptionScore),
                Just(MetricKind::Frechet),
            ]
        }

        proptest! {
            #[test]
            fn unit_moments(values in proptest::collection::vec(-500.0f64..500.0, 2..12), kind in kinds()) {
                let m: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("m{i:02}"), *v)).collect();
                let spread = values.iter().copied().fold(f64::MIN, f64::max) - values.iter().copied().fold(f64::MAX, f64::min);
                prop_assume!(spread > 1e-6);
                let z = normalize_scores(&m, kind).unwrap();
                let zs: Vec<f64> = z.values().copied().collect();
                let n = zs.len() as f64;
                let mean = zs.iter().sum::<f64>() / n;
                let var = zs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9);
            }

            #[test]
            fn fid_best_model_keeps_top_spot(values in proptest::collection::vec(0.0f64..300.0, 2..12)) {
                let m: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("m{i:02}"), *v)).collect();
                let lowest = m.iter().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                prop_assume!(m.values().filter(|v| **v == *lowest.1).count() == 1);
                prop_assume!(values.iter().any(|v| v != lowest.1));
                let z = normalize_scores(&m, MetricKind::Frechet).unwrap();
                let top = z.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                prop_assert_eq!(top.0, lowest.0);
            }
        }
    }
}
