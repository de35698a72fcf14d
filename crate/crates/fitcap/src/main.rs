use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fitcap::checkpoint::{load_classifier, load_generator};
use fitcap::data::{idx_paths, load_idx};
use fitcap::evaluation::{adapted_is, dataset_is, score_generator, DEFAULT_SAMPLES};
use fitcap::harness::{records_dir, run_experiment, ExperimentManifest, RecordStore, MANIFEST_COPY, REPORT_DIR};
use fitcap::report::{build_report, file_hash, render_report};
use fitcap::Result;

#[derive(Parser)]
#[command(name = "fitcap", version, about = "Fitting-capacity evaluation of conditional generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the sweep described by a TOML manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override `parallel_workers` from the manifest.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build tables, figures and index.md from a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Output directory; defaults to `<results>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapted IS (and FID, with --data) of a saved generator.
    Metrics {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        /// Directory with the IDX files; its test set is the FID reference.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(config: &Path, workers: Option<usize>) -> Result<()> {
    let mut manifest = ExperimentManifest::load(config)?;
    if let Some(w) = workers {
        manifest.parallel_workers = w;
    }
    let summary = run_experiment(&manifest)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let failed = summary.records.iter().filter(|r| r.failed()).count();
    println!(
        "{} records ({} trained, {} reused, {} with failures) in {}",
        summary.records.len(),
        summary.executed,
        summary.reused,
        failed,
        manifest.output_dir.display()
    );
    Ok(())
}

fn report(results: &Path, out: Option<PathBuf>) -> Result<()> {
    let loaded = RecordStore::new(records_dir(results)).load()?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let report = build_report(&loaded.records, file_hash(&results.join(MANIFEST_COPY)))?;
    let out = out.unwrap_or_else(|| results.join(REPORT_DIR));
    let files = render_report(&report, &out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn metrics(generator: &Path, classifier: &Path, data: Option<&Path>, samples: usize, seed: u64) -> Result<()> {
    let g = load_generator(generator)?;
    let clf = load_classifier(classifier)?;
    let json = match data {
        Some(dir) => {
            let [_, _, images, labels] = idx_paths(dir);
            let test = load_idx(&images, &labels)?;
            let scores = score_generator(&g, &clf, &test, samples, seed)?;
            serde_json::json!({
                "inception_score": scores.inception_score,
                "fid": scores.fid,
                "diff_is": scores.diff_is,
                "test_inception_score": dataset_is(&clf, &test)?,
                "samples": samples,
            })
        }
        None => serde_json::json!({ "inception_score": adapted_is(&g, &clf, samples, seed)?, "samples": samples }),
    };
    println!("{}", serde_json::to_string_pretty(&json).expect("plain values serialize"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, workers } => run(&config, workers),
        Command::Report { results, out } => report(&results, out),
        Command::Metrics { generator, classifier, data, samples, seed } => metrics(&generator, &classifier, data.as_deref(), samples, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
