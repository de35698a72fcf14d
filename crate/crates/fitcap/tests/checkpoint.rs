use fitcap::checkpoint::{classifier_file_name, generator_file_name, load_classifier, load_generator, member_path, save_classifier, save_generator};
use fitcap::classifier::{ArchitectureId, ClassifierConfig, TrainedClassifier};
use fitcap::data::SyntheticSpec;
use fitcap::generative::{train_generator, Family, GeneratorConfig};
use fitcap::Error;
use fitcap_core::LabeledDataset;

fn data() -> LabeledDataset {
    SyntheticSpec { classes: 3, train_per_class: 12, valid_per_class: 1, test_per_class: 1, spread: 0.1, modes_per_class: 1, mode_spread: 0.0, seed: 2 }.splits().unwrap().train
}

fn roundtrip(family: Family) {
    let dir = tempfile::tempdir().unwrap();
    let train = data();
    let mut cfg = GeneratorConfig::new(family, 6);
    cfg.epochs = 1;
    let g = train_generator(&train, &cfg).unwrap();
    let path = dir.path().join(generator_file_name("synthetic", family.as_str(), 6, None));
    save_generator(&g, &path).unwrap();
    let back = load_generator(&path).unwrap();
    assert_eq!(back.config, g.config);
    assert_eq!(back.report, g.report);
    let labels = [0, 1, 2, 2, 1, 0];
    assert_eq!(back.sample_labeled(&labels, 11).unwrap(), g.sample_labeled(&labels, 11).unwrap(), "{family}");
}

#[test]
fn generator_roundtrip_for_every_family() {
    for family in Family::TRAINED.into_iter().chain([Family::Replay, Family::UniformNoise, Family::LabelScramble]) {
        roundtrip(family);
    }
}

#[test]
fn ensemble_members_live_in_class_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GeneratorConfig::new(Family::Vae, 1);
    cfg.epochs = 1;
    let g = train_generator(&data(), &cfg).unwrap();
    let path = dir.path().join(generator_file_name("synthetic", "vae", 1, None));
    save_generator(&g, &path).unwrap();
    for k in 0..3 {
        let member = member_path(&path, k);
        assert!(member.is_file());
        assert_eq!(member.file_name().unwrap(), generator_file_name("synthetic", "vae", 1, Some(k)).as_str());
    }
    std::fs::remove_file(member_path(&path, 2)).unwrap();
    assert!(load_generator(&path).is_err());
}

#[test]
fn classifier_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let clf = TrainedClassifier::untrained(ArchitectureId::MnistCnn, 10, 3);
    let path = dir.path().join(classifier_file_name("mnist", "baseline", 3, 0.0));
    assert!(path.ends_with("mnist_clf_baseline_3_tau0.000.ckpt"));
    save_classifier(&clf, Some(&ClassifierConfig::new(ArchitectureId::MnistCnn, 3)), &path).unwrap();
    let back = load_classifier(&path).unwrap();
    assert_eq!(back.network().snapshot(), clf.network().snapshot());
    let d = SyntheticSpec::default().splits().unwrap().test;
    assert_eq!(back.log_probs(&d).unwrap(), clf.log_probs(&d).unwrap());
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let clf = TrainedClassifier::untrained(ArchitectureId::FashionCnn, 10, 0);
    let path = dir.path().join("c.ckpt");
    save_classifier(&clf, None, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(load_classifier(&path), Err(Error::Checkpoint { .. })));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_classifier(&path), Err(Error::Checkpoint { .. })));

    std::fs::write(&path, &bytes).unwrap();
    assert!(load_generator(&path).is_err());
    assert!(load_classifier(&dir.path().join("missing.ckpt")).is_err());
}
