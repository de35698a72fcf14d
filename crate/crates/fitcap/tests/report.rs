use std::fs;

use fitcap::evaluation::GeneratorScores;
use fitcap::generative::Family;
use fitcap::harness::{RunFailure, RunKey, RunRecord};
use fitcap::report::{build_report, csv_tables, render_report};
use fitcap_core::metrics::boxplot_stats;

fn rec(model: &str, seed: u64, tau: f64, acc: Option<f64>) -> RunRecord {
    let key = RunKey { dataset: "mnist".into(), model: model.into(), seed, tau, config_hash: "h".into() };
    let family = if model == "baseline" { None } else { model.parse::<Family>().ok() };
    let mut r = RunRecord::new(key, family);
    r.test_accuracy = acc;
    if tau == 1.0 {
        r.fitting_capacity = acc;
    }
    if acc.is_none() {
        r.failures.push(RunFailure::Error { message: "diverged".into() });
    }
    r.per_class_accuracy = vec![acc, acc.map(|a| a / 2.0)];
    r
}

fn rows(bytes: &[u8]) -> Vec<Vec<String>> {
    csv::Reader::from_reader(bytes).records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn empty_store_is_an_error() {
    assert!(build_report(&[], None).is_err());
}

#[test]
fn mixed_datasets_are_rejected() {
    let mut other = rec("vae", 0, 1.0, Some(0.9));
    other.run_key.dataset = "fashion".into();
    assert!(build_report(&[rec("vae", 1, 1.0, Some(0.9)), other], None).is_err());
}

#[test]
fn baseline_only_store() {
    let records = vec![rec("baseline", 0, 0.0, Some(0.98)), rec("baseline", 1, 0.0, Some(0.99))];
    let report = build_report(&records, None).unwrap();
    let tables = csv_tables(&report).unwrap();
    assert_eq!(rows(&tables["psi_summary.csv"]).len(), 1);
    let tau = rows(&tables["tau_accuracy.csv"]);
    assert_eq!(tau.len(), 1);
    assert_eq!((tau[0][0].as_str(), tau[0][1].as_str()), ("baseline", "0"));
}

#[test]
fn mean_and_best_of_a_fixture_family() {
    let accs = [0.90, 0.95, 1.00];
    let mut records: Vec<RunRecord> = accs.iter().enumerate().map(|(s, &a)| rec("vae", s as u64, 1.0, Some(a))).collect();
    records.push(rec("baseline", 0, 0.0, Some(0.99)));
    let report = build_report(&records, None).unwrap();
    let table = rows(&csv_tables(&report).unwrap()["psi_summary.csv"]);
    let vae = table.iter().find(|r| r[0] == "vae").unwrap();
    let mean: f64 = vae[5].parse().unwrap();
    let best: f64 = vae[6].parse().unwrap();
    assert!((mean - 0.95).abs() < 1e-12);
    assert_eq!(best, 1.0);
    assert_eq!(table[0][0], "baseline");
}

fn paper_shaped() -> Vec<RunRecord> {
    // eight seeds per family, one failed GAN run far below the rest
    let mut out = Vec::new();
    let fams: [(&str, [f64; 8]); 3] = [
        ("vae", [0.962, 0.966, 0.968, 0.961, 0.963, 0.965, 0.960, 0.964]),
        ("gan", [0.912, 0.905, 0.921, 0.451, 0.915, 0.909, 0.918, 0.911]),
        ("cvae", [0.951, 0.949, 0.955, 0.953, 0.948, 0.952, 0.950, 0.954]),
    ];
    for (model, accs) in fams {
        for (seed, a) in accs.iter().enumerate() {
            let mut r = rec(model, seed as u64, 1.0, Some(*a));
            r.generator_scores = Some(GeneratorScores { inception_score: 9.0 * a, fid: 10.0 / a, diff_is: a - 1.0 });
            out.push(r);
            out.push(rec(model, seed as u64, 0.5, Some((a + 0.99) / 2.0)));
        }
    }
    for seed in 0..8 {
        out.push(rec("baseline", seed, 0.0, Some(0.978 + seed as f64 * 0.001)));
    }
    out
}

#[test]
fn boxplot_csv_is_boxplot_stats_verbatim() {
    let records = paper_shaped();
    let report = build_report(&records, None).unwrap();
    let table = rows(&csv_tables(&report).unwrap()["psi_boxplot.csv"]);
    for model in ["gan", "vae", "cvae"] {
        let vals: Vec<f64> = records.iter().filter(|r| r.run_key.model == model && r.run_key.tau == 1.0).map(|r| r.test_accuracy.unwrap()).collect();
        let s = boxplot_stats(&vals).unwrap();
        let row = table.iter().find(|r| r[0] == model).unwrap();
        let expect = [
            s.median.to_string(),
            s.q1.to_string(),
            s.q3.to_string(),
            s.lower_fence.to_string(),
            s.upper_fence.to_string(),
            s.lower_whisker.to_string(),
            s.upper_whisker.to_string(),
        ];
        assert_eq!(&row[2..9], &expect);
        let outliers = s.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        assert_eq!(row[9], outliers);
    }
    let gan = table.iter().find(|r| r[0] == "gan").unwrap();
    assert_eq!(gan[9], "0.451");
}

#[test]
fn normalized_scores_negate_fid() {
    let report = build_report(&paper_shaped(), None).unwrap();
    let z = |model: &str, metric: &str| report.normalized.iter().find(|r| r.model == model && r.metric.name() == metric).unwrap().z;
    // vae has the highest mean accuracy and so the lowest FID (10 / a)
    assert!(z("vae", "fitting_capacity") > z("cvae", "fitting_capacity"));
    assert!(z("vae", "fid") > z("cvae", "fid"));
    for metric in ["fitting_capacity", "inception_score", "fid", "diff_is"] {
        let sum: f64 = ["vae", "gan", "cvae"].iter().map(|m| z(m, metric)).sum();
        assert!(sum.abs() < 1e-9);
    }
}

#[test]
fn per_class_rows_are_relative_to_the_same_seed_baseline() {
    let records = vec![rec("baseline", 0, 0.0, Some(0.9)), rec("baseline", 1, 0.0, Some(0.8)), rec("vae", 0, 1.0, Some(0.7)), rec("vae", 1, 1.0, Some(0.7))];
    let report = build_report(&records, None).unwrap();
    let class0 = report.per_class.iter().find(|r| r.model == "vae" && r.class == 0).unwrap();
    // differences -0.2 and -0.1
    assert_eq!(class0.n, 2);
    assert!((class0.mean.unwrap() + 0.15).abs() < 1e-12);
}

#[test]
fn rendering_is_repeatable_and_marks_failures() {
    let mut records = paper_shaped();
    records.push(rec("began", 0, 1.0, None));
    records.push(rec("began", 1, 1.0, None));
    let report = build_report(&records, Some("abc".into())).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let written = render_report(&report, a.path()).unwrap();
    render_report(&report, b.path()).unwrap();
    for path in &written {
        let name = path.file_name().unwrap();
        assert!(fs::metadata(path).unwrap().len() > 0);
        if path.extension().is_some_and(|e| e == "csv" || e == "md") {
            assert_eq!(fs::read(path).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
        }
    }
    for png in ["tau_max.png", "tau_std.png", "psi_boxplot.png", "psi_boxplot_zoomed.png", "per_class_relative.png", "normalized.png"] {
        assert!(a.path().join(png).is_file(), "{png}");
    }
    let index = fs::read_to_string(a.path().join("index.md")).unwrap();
    assert!(index.contains("| began | 2 | - | - | - | **FAILED: all 2 runs failed** |"));
    assert!(index.contains("abc"));
    let summary = rows(&fs::read(a.path().join("psi_summary.csv")).unwrap());
    assert_eq!(summary.iter().find(|r| r[0] == "began").unwrap()[4], "all_failed");
}
