use fitcap::classifier::{
    evaluate_accuracy, evaluate_per_class, per_class_accuracy, train_classifier, train_classifier_with, ArchitectureId, ClassifierConfig, Stop, TrainedClassifier,
};
use fitcap::data::SyntheticSpec;
use fitcap::mixture::{Batch, BatchSource, MixtureStream};
use fitcap::Result;
use fitcap_core::{BatchOrigin, LabeledDataset, MixtureConfig, SampleShape};
use proptest::prelude::*;

/// One fixed two-sample batch per epoch, so the loop itself is cheap.
struct Fixed;

impl BatchSource for Fixed {
    fn next_batch(&mut self) -> Result<Batch> {
        let mut samples = vec![0.0; 2 * 784];
        samples[784..].iter_mut().for_each(|v| *v = 1.0);
        Ok(Batch { samples, labels: vec![0, 1], origin: BatchOrigin::Real })
    }
    fn batches_per_epoch(&self) -> usize {
        1
    }
    fn num_classes(&self) -> usize {
        10
    }
}

fn cfg(max_epochs: usize, patience: usize) -> ClassifierConfig {
    let mut c = ClassifierConfig::new(ArchitectureId::MnistCnn, 4);
    c.max_epochs = max_epochs;
    c.patience = patience;
    c
}

fn synthetic() -> fitcap_core::DatasetSplits {
    SyntheticSpec { classes: 10, train_per_class: 200, valid_per_class: 20, test_per_class: 40, spread: 0.25, modes_per_class: 1, mode_spread: 0.0, seed: 12 }.splits().unwrap()
}

#[test]
fn flat_trace_after_epoch_ten_stops_at_sixty() {
    let trace = |e: usize| if e <= 10 { e as f64 / 20.0 } else { 0.5 };
    let (clf, log) = train_classifier_with(&mut Fixed, &cfg(200, 50), |e, _| Ok(trace(e))).unwrap();
    assert_eq!(log.stop_epoch, 60);
    assert_eq!(log.stop_reason, Stop::Patience);
    assert_eq!(clf.selected_epoch, 10);
    assert_eq!(log.epochs.len(), 60);
    assert_eq!(clf.valid_accuracy_trace.len(), 60);
}

#[test]
fn strictly_improving_trace_runs_to_max_epochs() {
    let (clf, log) = train_classifier_with(&mut Fixed, &cfg(200, 50), |e, _| Ok(e as f64 / 1000.0)).unwrap();
    assert_eq!(log.stop_epoch, 200);
    assert_eq!(log.stop_reason, Stop::MaxEpochs);
    assert_eq!(clf.selected_epoch, 200);
}

#[test]
fn best_epoch_weights_are_restored() {
    let mut snapshots = Vec::new();
    let trace = [0.2, 0.9, 0.3, 0.4];
    let (clf, _) = train_classifier_with(&mut Fixed, &cfg(4, 4), |e, c| {
        snapshots.push(c.network().snapshot());
        Ok(trace[e - 1])
    })
    .unwrap();
    assert_eq!(clf.selected_epoch, 2);
    assert_eq!(clf.network().snapshot(), snapshots[1]);
}

#[test]
fn ties_select_the_earliest_epoch() {
    let trace = [0.5, 0.7, 0.7, 0.7];
    let (clf, log) = train_classifier_with(&mut Fixed, &cfg(10, 2), |e, _| Ok(trace[e - 1])).unwrap();
    assert_eq!(clf.selected_epoch, 2);
    assert_eq!(log.stop_epoch, 4);
}

#[test]
fn untrained_classifier_sits_at_chance() {
    let s = synthetic();
    let clf = TrainedClassifier::untrained(ArchitectureId::MnistCnn, 10, 0);
    let acc = evaluate_accuracy(&clf, &s.test).unwrap();
    assert!((0.05..=0.20).contains(&acc), "untrained accuracy {acc}");
}

#[test]
fn accuracy_on_own_predictions_and_their_opposite() {
    let s = synthetic();
    let clf = TrainedClassifier::untrained(ArchitectureId::MnistCnn, 10, 1);
    let pred = clf.predict(&s.test).unwrap();
    let one = LabeledDataset::new(s.test.sample(0).to_vec(), vec![pred[0]], SampleShape::MNIST, 10).unwrap();
    assert_eq!(evaluate_accuracy(&clf, &one).unwrap(), 1.0);
    let (samples, _) = s.test.clone().into_parts();
    let wrong: Vec<usize> = pred.iter().map(|p| (p + 1) % 10).collect();
    let adversarial = LabeledDataset::new(samples, wrong, SampleShape::MNIST, 10).unwrap();
    assert_eq!(evaluate_accuracy(&clf, &adversarial).unwrap(), 0.0);
}

#[test]
fn evaluation_is_deterministic() {
    let s = synthetic();
    let clf = TrainedClassifier::untrained(ArchitectureId::MnistCnn, 10, 2);
    assert_eq!(clf.log_probs(&s.test).unwrap(), clf.log_probs(&s.test).unwrap());
}

#[test]
fn per_class_fixtures() {
    let labels = [0, 0, 1, 1, 2, 2];
    assert_eq!(per_class_accuracy(&labels, &labels, 3), vec![Some(1.0); 3]);
    assert_eq!(per_class_accuracy(&[0; 6], &labels, 3), vec![Some(1.0), Some(0.0), Some(0.0)]);
    // class 3 has no samples: undefined, not zero
    assert_eq!(per_class_accuracy(&labels, &labels, 4)[3], None);
}

#[test]
fn per_class_threshold_classifier() {
    // 1-D points with threshold 0.5: predict 1 when x > 0.5
    let xs = [0.1, 0.4, 0.6, 0.9, 0.2, 0.7, 0.55, 0.3];
    let labels = [0, 0, 0, 0, 1, 1, 1, 1];
    let pred: Vec<usize> = xs.iter().map(|&x| usize::from(x > 0.5)).collect();
    // class 0: x in {0.1, 0.4} correct of 4 -> 0.5; class 1: {0.7, 0.55} of 4 -> 0.5
    assert_eq!(per_class_accuracy(&pred, &labels, 2), vec![Some(0.5), Some(0.5)]);
}

#[test]
fn per_class_agrees_with_overall_on_a_trained_model() {
    let s = synthetic();
    let mut stream = MixtureStream::new(&s.train, None, MixtureConfig::new(0.0, 32, 3).unwrap()).unwrap();
    let (clf, log) = train_classifier(&mut stream, &s.valid, &cfg(3, 3)).unwrap();
    assert_eq!(log.skipped_steps, 0);
    let acc = evaluate_accuracy(&clf, &s.test).unwrap();
    assert!(acc > 0.5, "synthetic blobs should be easy, got {acc}");
    let per = evaluate_per_class(&clf, &s.test).unwrap();
    // the split is random, so weight each class by its share of the test set
    let n = s.test.len() as f64;
    let weighted: f64 = per.iter().enumerate().map(|(k, p)| p.unwrap() * s.test.labels().iter().filter(|&&l| l == k).count() as f64 / n).sum();
    assert!((weighted - acc).abs() < 1e-12, "{weighted} vs {acc}");
}

#[test]
fn training_is_reproducible() {
    let s = synthetic();
    let run = || {
        let mut stream = MixtureStream::new(&s.train, None, MixtureConfig::new(0.0, 32, 3).unwrap()).unwrap();
        let (clf, _) = train_classifier(&mut stream, &s.valid, &cfg(2, 2)).unwrap();
        clf.log_probs(&s.test).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn config_validation() {
    assert!(cfg(0, 5).validate().is_err());
    assert!(cfg(5, 0).validate().is_err());
    let mut c = cfg(5, 5);
    c.learning_rate = -1.0;
    assert!(c.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_class_counts_add_up(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let (pred, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let per = per_class_accuracy(&pred, &labels, 4);
        let mut correct = 0.0;
        for (k, p) in per.iter().enumerate() {
            let n = labels.iter().filter(|&&l| l == k).count();
            prop_assert_eq!(p.is_some(), n > 0);
            if let Some(a) = p {
                prop_assert!((0.0..=1.0).contains(a));
                correct += a * n as f64;
            }
        }
        let direct = pred.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64;
        prop_assert!((correct - direct).abs() < 1e-9);
    }
}
