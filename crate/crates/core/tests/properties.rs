use std::collections::BTreeMap;

use fitcap_core::metrics::{
    boxplot_stats, frechet_distance, inception_score, inception_terms, normalize_scores, GaussianMoments, MetricKind, ProbMatrix, SymMatrix,
};
use fitcap_core::{split_indices, EarlyStopping, MixtureConfig, MixtureSchedule, BatchOrigin};
use proptest::prelude::*;

fn prob_rows(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, k), 1..30).prop_map(|rows| {
        rows.into_iter()
            .flat_map(|r| {
                // an all-zero draw becomes a one-hot row
                let z: f64 = r.iter().sum();
                if z == 0.0 {
                    let mut one = vec![0.0; r.len()];
                    one[0] = 1.0;
                    one
                } else {
                    r.iter().map(|v| v / z).collect()
                }
            })
            .collect()
    })
}

fn moments(d: usize) -> impl Strategy<Value = GaussianMoments> {
    (proptest::collection::vec(-5.0f64..5.0, d), proptest::collection::vec(-1.0f64..1.0, d * d)).prop_map(move |(mean, b)| {
        // B B^T + 0.01 I is symmetric positive definite
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>() + if i == j { 0.01 } else { 0.0 };
            }
        }
        GaussianMoments::new(mean, SymMatrix::from_row_major(d, c).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn inception_score_stays_within_one_and_k((k, data) in (2usize..12).prop_flat_map(|k| (Just(k), prob_rows(k)))) {
        let p = ProbMatrix::new(data, k).unwrap();
        let is = inception_score(&p);
        prop_assert!(is >= 1.0 - 1e-9 && is <= k as f64 + 1e-9, "IS {} with K = {}", is, k);
        let t = inception_terms(&p);
        prop_assert!((t.mean_kl - (t.mean_cross_entropy - t.mean_entropy)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn frechet_is_symmetric_and_zero_on_itself((a, b) in (1usize..6).prop_flat_map(|d| (moments(d), moments(d)))) {
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab), "{} vs {}", ab, ba);
        prop_assert!(frechet_distance(&a, &a).unwrap() <= 1e-8);
    }

    #[test]
    fn z_scores_have_unit_moments_and_keep_the_best_model(values in proptest::collection::vec(0.0f64..500.0, 2..10)) {
        let map: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("m{i}"), *v)).collect();
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        for kind in [MetricKind::InceptionScore, MetricKind::Frechet] {
            let z = normalize_scores(&map, kind).unwrap();
            let n = z.len() as f64;
            let mean = z.values().sum::<f64>() / n;
            let std = (z.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() <= 1e-9 && (std - 1.0).abs() <= 1e-9);
            let top = z.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let raw = if kind.lower_is_better() {
                map.iter().min_by(|a, b| a.1.total_cmp(b.1)).unwrap()
            } else {
                map.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap()
            };
            prop_assert!(map[top] == *raw.1);
        }
    }

    #[test]
    fn boxplot_invariants(values in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        let s = boxplot_stats(&values).unwrap();
        prop_assert!(s.q1 <= s.median && s.median <= s.q3);
        prop_assert_eq!(s.best, values.iter().copied().fold(f64::MIN, f64::max));
        let (lo, hi) = (s.q1 - 1.5 * s.iqr(), s.q3 + 1.5 * s.iqr());
        for o in &s.outliers {
            prop_assert!(*o < lo || *o > hi);
        }
        let inside = values.iter().filter(|v| (lo..=hi).contains(*v)).count();
        prop_assert_eq!(inside + s.outliers.len(), values.len());
    }

    #[test]
    fn split_partitions_the_index_set(n in 2usize..2000, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let valid = 1 + ((n - 1) as f64 * frac) as usize % (n - 1);
        let (tr, va) = split_indices(n, valid, seed).unwrap();
        prop_assert_eq!(va.len(), valid);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn early_stopping_selects_the_earliest_best(trace in proptest::collection::vec(0u8..5, 1..80), patience in 1usize..10) {
        let max = trace.len().max(patience);
        let mut es = EarlyStopping::new(patience, max).unwrap();
        let mut seen = Vec::new();
        for &v in &trace {
            seen.push(f64::from(v));
            if es.observe(f64::from(v)).should_stop() {
                break;
            }
        }
        let best = seen.iter().copied().fold(f64::MIN, f64::max);
        let first = seen.iter().position(|&v| v == best).unwrap() + 1;
        prop_assert_eq!(es.best_epoch(), Some(first));
        if es.stopped().is_some() && seen.len() < max {
            prop_assert_eq!(seen.len(), first + patience);
        }
    }

    #[test]
    fn degenerate_mixtures_never_draw(tau in prop_oneof![Just(0.0), Just(1.0)], seed in any::<u64>()) {
        let mut s = MixtureSchedule::new(MixtureConfig::new(tau, 8, seed).unwrap(), 10).unwrap();
        let want = if tau == 0.0 { BatchOrigin::Real } else { BatchOrigin::Generated };
        for _ in 0..200 {
            prop_assert_eq!(s.next_origin(), want);
        }
    }
}
