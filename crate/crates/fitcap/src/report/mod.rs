//! Tables, figures and an index page built from a results store.
//!
//! Every number is computed once, in [`build_report`], from the scoring
//! functions of `fitcap_core::metrics`. The CSV writers and the plots only
//! format what the report holds.

mod plot;
mod theme;

pub use theme::Theme;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fitcap_core::metrics::summary::{mean, sample_std};
use fitcap_core::metrics::{boxplot_stats, normalize_scores, per_class_relative, MetricKind, ScoreSummary};
use sha2::{Digest, Sha256};

use crate::checkpoint::write_atomic;
use crate::generative::Family;
use crate::harness::{RunFailure, RunRecord, BASELINE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// SHA-256 of the manifest copy stored with the results, if any.
    pub manifest_hash: Option<String>,
    pub dataset: String,
    pub record_count: usize,
    pub failed_count: usize,
}

/// Fitting capacity of one model across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: String,
    pub family: Option<Family>,
    /// `tau = 1` records, failed or not.
    pub runs: usize,
    /// `tau = 1` records carrying any failure flag.
    pub failed_runs: usize,
    /// Over the `tau = 1` runs that produced an accuracy, flagged or not;
    /// `None` when none did.
    pub psi: Option<ScoreSummary>,
}

impl ModelSummary {
    pub fn all_failed(&self) -> bool {
        self.psi.is_none() || self.failed_runs == self.runs
    }

    pub fn status(&self) -> &'static str {
        if self.all_failed() {
            "all_failed"
        } else if self.failed_runs > 0 {
            "partial_failure"
        } else {
            "ok"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauRow {
    pub model: String,
    pub tau: f64,
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub model: String,
    pub class: usize,
    /// Seeds with both a `tau = 1` and a baseline value for the class.
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRow {
    pub model: String,
    pub metric: MetricKind,
    /// Mean across seeds before normalization.
    pub value: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnRow {
    pub model: String,
    pub tau: f64,
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRow {
    pub slot: String,
    pub model: String,
    pub seed: u64,
    pub tau: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub provenance: Provenance,
    /// Test accuracy of the real-data classifiers.
    pub baseline: Option<ScoreSummary>,
    /// Generator models in name order.
    pub models: Vec<ModelSummary>,
    pub tau_rows: Vec<TauRow>,
    pub per_class: Vec<ClassRow>,
    pub normalized: Vec<NormalizedRow>,
    pub knn: Vec<KnnRow>,
    pub failures: Vec<FailureRow>,
}

fn failure_text(f: &RunFailure) -> String {
    match f {
        RunFailure::Generator { flag } => format!("generator: {}", serde_json::to_string(flag).unwrap_or_default()),
        RunFailure::Classifier { skipped_steps } => format!("classifier: {skipped_steps} skipped steps"),
        RunFailure::Error { message } => format!("error: {message}"),
    }
}

fn tau_row(model: &str, tau: f64, values: &[f64]) -> TauRow {
    TauRow {
        model: model.to_string(),
        tau,
        n: values.len(),
        mean: mean(values),
        std: sample_std(values),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Every statistic the report shows. Records must share one dataset.
pub fn build_report(records: &[RunRecord], manifest_hash: Option<String>) -> Result<MetricReport> {
    let first = records.first().ok_or_else(|| Error::arg("the results store is empty"))?;
    let dataset = first.run_key.dataset.clone();
    if let Some(r) = records.iter().find(|r| r.run_key.dataset != dataset) {
        return Err(Error::arg(format!("records mix datasets {dataset} and {}", r.run_key.dataset)));
    }
    let mut slots = std::collections::BTreeSet::new();
    if let Some(r) = records.iter().find(|r| !slots.insert(r.run_key.slot())) {
        return Err(Error::arg(format!("run key {} appears twice", r.run_key.slot())));
    }

    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.run_key.model.as_str(), a.run_key.seed).cmp(&(b.run_key.model.as_str(), b.run_key.seed)).then(a.run_key.tau.total_cmp(&b.run_key.tau))
    });
    let ok = |r: &&RunRecord| r.test_accuracy.is_some();

    let baselines: Vec<&RunRecord> = sorted.iter().copied().filter(|r| r.is_baseline()).collect();
    let base_acc: Vec<f64> = baselines.iter().filter_map(|r| r.test_accuracy).collect();
    let baseline = if base_acc.is_empty() { None } else { Some(boxplot_stats(&base_acc)?) };
    let base_by_seed: BTreeMap<u64, &RunRecord> = baselines.iter().copied().filter(ok).map(|r| (r.run_key.seed, r)).collect();

    let mut by_model: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in sorted.iter().copied().filter(|r| !r.is_baseline()) {
        by_model.entry(r.run_key.model.as_str()).or_default().push(r);
    }

    let mut tau_rows = Vec::new();
    if !base_acc.is_empty() {
        tau_rows.push(tau_row(BASELINE, 0.0, &base_acc));
    }
    let mut models = Vec::new();
    let mut per_class = Vec::new();
    let mut knn = Vec::new();
    let mut metric_means: BTreeMap<MetricKind, BTreeMap<String, f64>> = BTreeMap::new();

    if let Some(rows) = group_knn(BASELINE, &baselines) {
        knn.extend(rows);
    }
    for (&model, runs) in &by_model {
        let psi_runs: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.run_key.tau == 1.0).collect();
        let psi_vals: Vec<f64> = psi_runs.iter().filter_map(|r| r.fitting_capacity.or(r.test_accuracy)).collect();
        models.push(ModelSummary {
            model: model.to_string(),
            family: runs.iter().find_map(|r| r.family),
            runs: psi_runs.len(),
            failed_runs: psi_runs.iter().filter(|r| r.failed()).count(),
            psi: if psi_vals.is_empty() { None } else { Some(boxplot_stats(&psi_vals)?) },
        });

        if !base_acc.is_empty() {
            tau_rows.push(tau_row(model, 0.0, &base_acc));
        }
        let mut by_tau: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in runs {
            if let Some(a) = r.test_accuracy {
                by_tau.entry(r.run_key.tau.to_bits()).or_default().push(a);
            }
        }
        let mut taus: Vec<(f64, Vec<f64>)> = by_tau.into_iter().map(|(t, v)| (f64::from_bits(t), v)).collect();
        taus.sort_by(|a, b| a.0.total_cmp(&b.0));
        tau_rows.extend(taus.iter().map(|(t, v)| tau_row(model, *t, v)));

        let mut rel: Vec<Vec<f64>> = Vec::new();
        for r in psi_runs.iter().copied().filter(ok) {
            let Some(b) = base_by_seed.get(&r.run_key.seed) else { continue };
            let diff = per_class_relative(&r.per_class_accuracy, &b.per_class_accuracy)?;
            if rel.len() < diff.len() {
                rel.resize(diff.len(), Vec::new());
            }
            for (k, d) in diff.iter().enumerate() {
                if let Some(d) = d {
                    rel[k].push(*d);
                }
            }
        }
        per_class.extend(rel.iter().enumerate().map(|(class, v)| ClassRow {
            model: model.to_string(),
            class,
            n: v.len(),
            mean: if v.is_empty() { None } else { Some(mean(v)) },
            std: sample_std(v),
        }));

        let ok_psi: Vec<&RunRecord> = psi_runs.iter().copied().filter(ok).collect();
        if !psi_vals.is_empty() {
            metric_means.entry(MetricKind::FittingCapacity).or_default().insert(model.to_string(), mean(&psi_vals));
        }
        let scores: Vec<_> = ok_psi.iter().filter_map(|r| r.generator_scores).collect();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !scores.is_empty() {
            for (kind, vals) in [
                (MetricKind::InceptionScore, scores.iter().map(|s| s.inception_score).collect::<Vec<_>>()),
                (MetricKind::Frechet, scores.iter().map(|s| s.fid).collect()),
                (MetricKind::DiffInceptionScore, scores.iter().map(|s| s.diff_is).collect()),
            ] {
                if finite(&vals) {
                    metric_means.entry(kind).or_default().insert(model.to_string(), mean(&vals));
                }
            }
        }
        if let Some(rows) = group_knn(model, runs) {
            knn.extend(rows);
        }
    }

    let mut normalized = Vec::new();
    for (kind, values) in &metric_means {
        if values.len() < 2 {
            continue;
        }
        let z = normalize_scores(values, *kind)?;
        normalized.extend(values.iter().map(|(model, v)| NormalizedRow { model: model.clone(), metric: *kind, value: *v, z: z[model] }));
    }

    let failures: Vec<FailureRow> = sorted
        .iter()
        .filter(|r| r.failed())
        .map(|r| FailureRow {
            slot: r.run_key.slot(),
            model: r.run_key.model.clone(),
            seed: r.run_key.seed,
            tau: r.run_key.tau,
            reason: r.failures.iter().map(failure_text).collect::<Vec<_>>().join("; "),
        })
        .collect();

    Ok(MetricReport {
        provenance: Provenance { manifest_hash, dataset, record_count: records.len(), failed_count: failures.len() },
        baseline,
        models,
        tau_rows,
        per_class,
        normalized,
        knn,
        failures,
    })
}

fn group_knn(model: &str, runs: &[&RunRecord]) -> Option<Vec<KnnRow>> {
    let mut by_tau: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(a) = r.knn_accuracy {
            by_tau.entry(r.run_key.tau.to_bits()).or_default().push(a);
        }
    }
    if by_tau.is_empty() {
        return None;
    }
    let mut rows: Vec<KnnRow> = by_tau
        .into_iter()
        .map(|(t, v)| KnnRow { model: model.to_string(), tau: f64::from_bits(t), n: v.len(), mean: mean(&v), std: sample_std(&v) })
        .collect();
    rows.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Some(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Render(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Render(e.to_string()))
}

fn summary_cells(s: &ScoreSummary) -> Vec<String> {
    vec![s.mean.to_string(), s.best.to_string(), opt(s.std), s.median.to_string(), s.q1.to_string(), s.q3.to_string()]
}

/// The CSV tables by file name.
pub fn csv_tables(report: &MetricReport) -> Result<BTreeMap<&'static str, Vec<u8>>> {
    let mut out = BTreeMap::new();

    let mut rows = Vec::new();
    if let Some(b) = &report.baseline {
        let mut row = vec![BASELINE.to_string(), String::new(), b.count().to_string(), "0".to_string(), "ok".to_string()];
        row.extend(summary_cells(b));
        rows.push(row);
    }
    for m in &report.models {
        let mut row = vec![m.model.clone(), m.family.map(|f| f.to_string()).unwrap_or_default(), m.runs.to_string(), m.failed_runs.to_string(), m.status().to_string()];
        match &m.psi {
            Some(s) => row.extend(summary_cells(s)),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        rows.push(row);
    }
    out.insert("psi_summary.csv", csv_bytes(&["model", "family", "runs", "failed_runs", "status", "mean", "best", "std", "median", "q1", "q3"], rows)?);

    let boxes = report.baseline.iter().map(|b| (BASELINE, b)).chain(report.models.iter().filter_map(|m| m.psi.as_ref().map(|s| (m.model.as_str(), s))));
    let rows = boxes.map(|(name, s)| {
        vec![
            name.to_string(),
            s.count().to_string(),
            s.median.to_string(),
            s.q1.to_string(),
            s.q3.to_string(),
            s.lower_fence.to_string(),
            s.upper_fence.to_string(),
            s.lower_whisker.to_string(),
            s.upper_whisker.to_string(),
            s.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        ]
    });
    out.insert(
        "psi_boxplot.csv",
        csv_bytes(&["model", "n", "median", "q1", "q3", "lower_fence", "upper_fence", "lower_whisker", "upper_whisker", "outliers"], rows.collect::<Vec<_>>())?,
    );

    let rows = report.tau_rows.iter().map(|r| vec![r.model.clone(), r.tau.to_string(), r.n.to_string(), r.mean.to_string(), opt(r.std), r.max.to_string(), r.min.to_string()]);
    out.insert("tau_accuracy.csv", csv_bytes(&["model", "tau", "n", "mean", "std", "max", "min"], rows.collect::<Vec<_>>())?);

    let rows = report.per_class.iter().map(|r| vec![r.model.clone(), r.class.to_string(), r.n.to_string(), opt(r.mean), opt(r.std)]);
    out.insert("per_class_relative.csv", csv_bytes(&["model", "class", "n", "mean", "std"], rows.collect::<Vec<_>>())?);

    let rows = report.normalized.iter().map(|r| vec![r.model.clone(), r.metric.name().to_string(), r.value.to_string(), r.z.to_string()]);
    out.insert("normalized.csv", csv_bytes(&["model", "metric", "value", "z"], rows.collect::<Vec<_>>())?);

    let rows = report.knn.iter().map(|r| vec![r.model.clone(), r.tau.to_string(), r.n.to_string(), r.mean.to_string(), opt(r.std)]);
    out.insert("knn_accuracy.csv", csv_bytes(&["model", "tau", "n", "mean", "std"], rows.collect::<Vec<_>>())?);

    let rows = report.failures.iter().map(|f| vec![f.slot.clone(), f.model.clone(), f.seed.to_string(), f.tau.to_string(), f.reason.clone()]);
    out.insert("failures.csv", csv_bytes(&["slot", "model", "seed", "tau", "reason"], rows.collect::<Vec<_>>())?);

    Ok(out)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn index_markdown(report: &MetricReport, tables: &[&str], figures: &[(String, String)]) -> String {
    let p = &report.provenance;
    let mut s = String::new();
    let _ = writeln!(s, "# Fitting capacity report: {}\n", p.dataset);
    let _ = writeln!(s, "- records: {}", p.record_count);
    let _ = writeln!(s, "- failed records: {}", p.failed_count);
    let _ = writeln!(s, "- manifest sha256: {}\n", p.manifest_hash.as_deref().unwrap_or("unknown"));

    let _ = writeln!(s, "## Fitting capacity (test accuracy at tau = 1, %)\n");
    let _ = writeln!(s, "| model | runs | mean | best | std | status |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    if let Some(b) = &report.baseline {
        let _ = writeln!(s, "| {BASELINE} | {} | {} | {} | {} | ok |", b.count(), pct(b.mean), pct(b.best), b.std.map_or("-".into(), pct));
    }
    for m in &report.models {
        let status = match m.status() {
            "ok" => "ok".to_string(),
            "all_failed" => format!("**FAILED: all {} runs failed**", m.runs),
            _ => format!("**FAILED {}/{} runs**", m.failed_runs, m.runs),
        };
        match &m.psi {
            Some(ps) => {
                let _ = writeln!(s, "| {} | {} | {} | {} | {} | {status} |", m.model, m.runs, pct(ps.mean), pct(ps.best), ps.std.map_or("-".into(), pct));
            }
            None => {
                let _ = writeln!(s, "| {} | {} | - | - | - | {status} |", m.model, m.runs);
            }
        }
    }
    let _ = writeln!(s, "\nThe maximum-accuracy curve takes the best seed at every tau; it is a max statistic, not a mean.\n");

    if !figures.is_empty() {
        let _ = writeln!(s, "## Figures\n");
        for (file, title) in figures {
            let _ = writeln!(s, "### {title}\n\n![{title}]({file})\n");
        }
    }
    let _ = writeln!(s, "## Tables\n");
    for t in tables {
        let _ = writeln!(s, "- [{t}]({t})");
    }
    if !report.failures.is_empty() {
        let _ = writeln!(s, "\n## Failed runs\n");
        let _ = writeln!(s, "| run | reason |");
        let _ = writeln!(s, "|---|---|");
        for f in &report.failures {
            let _ = writeln!(s, "| {} | FAILED: {} |", f.slot, f.reason.replace('|', "/"));
        }
    }
    s
}

/// Writes CSV tables, PNG figures and `index.md` into `dir`; returns the
/// paths written.
pub fn render_report(report: &MetricReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let tables = csv_tables(report)?;
    for (name, bytes) in &tables {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
    }
    let theme = Theme::builtin()?;
    let figures = plot::render_all(report, &theme, dir)?;
    written.extend(figures.iter().map(|(f, _)| dir.join(f)));
    let names: Vec<&str> = tables.keys().copied().collect();
    let index = dir.join("index.md");
    write_atomic(&index, index_markdown(report, &names, &figures).as_bytes())?;
    written.push(index);
    Ok(written)
}

/// SHA-256 of a file, hex encoded.
pub fn file_hash(path: &Path) -> Option<String> {
    let bytes = std::fs::read(path).ok()?;
    Some(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
