//! End-to-end experiment runs and their output files.
//!
//! A run directory holds:
//!
//! * `report.json`: `{"body": …, "metadata": …}`. The body depends only on the
//!   config, model, and data; timings and host details live in `metadata`.
//! * `traces.jsonl`: one record per test sample, in sample order.
//! * `metrics.csv`: one row per sample with the columns in [`METRICS_COLUMNS`].
//! * `similarity_hist.csv`: before/after histograms of mean pairwise similarity
//!   (adaptation runs only).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{serialize_config, ExperimentConfig, Method};
use crate::adapt::AdaptTrace;
use crate::error::{config_err, Error, Result};
use crate::snn::load_checkpoint;
use crate::trainer::{evaluate, load_dataset_cache, synth_dataset, Dataset, EvalOptions};
use crate::{rng::SeedTree, Network};

/// Frozen column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 12] = [
    "sample_id",
    "label",
    "pred_before",
    "pred_after",
    "correct_before",
    "correct_after",
    "pre_loss",
    "post_loss",
    "pre_mean_sim",
    "post_mean_sim",
    "fallback",
    "update_count",
];

/// Trace line of a run without adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: u64,
    pub label: usize,
    pub prediction: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: String,
    pub model_fingerprint: String,
    pub method: String,
    pub samples: usize,
    /// Accuracy of the configured method.
    pub accuracy: f64,
    pub no_adapt_accuracy: f64,
    pub space_accuracy: Option<f64>,
    pub mean_pre_similarity: Option<f64>,
    pub mean_post_similarity: Option<f64>,
    pub fraction_similarity_increased: Option<f64>,
    pub fraction_loss_decreased: Option<f64>,
    pub fallbacks: usize,
    /// `confusion[label][prediction]` for the configured method.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_seconds: u64,
    pub host: String,
    pub total_seconds: f64,
    pub mean_seconds_per_sample: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub metadata: RunMetadata,
    pub traces: Vec<AdaptTrace>,
    pub predictions: Vec<PredictionRecord>,
}

/// Test split for `cfg`, truncated to `data.test_limit`.
pub fn load_test_set(cfg: &ExperimentConfig) -> Result<Dataset> {
    let test = if cfg.data.cache.as_os_str().is_empty() {
        synth_dataset(&cfg.data.spec, &SeedTree::new(cfg.data.seed))?.1
    } else {
        load_dataset_cache(&cfg.data.cache)?.1
    };
    Ok(if cfg.data.test_limit > 0 { test.take(cfg.data.test_limit) } else { test })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 { 0.0 } else { count as f64 / total as f64 }
}

/// Runs `cfg` on an in-memory model and test set without touching the file system.
pub fn execute(params: &Network, test: &Dataset, cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let adapt = match cfg.method {
        Method::Space => Some((cfg.augment.clone(), cfg.adapt)),
        Method::NoAdapt => None,
    };
    let corruption = (cfg.corruption_severity > 0).then_some((cfg.corruption_kind, cfg.corruption_severity));
    let opts = EvalOptions { corruption, adapt, carry_state: cfg.carry_state };
    let result = evaluate(params, test, &opts, &cfg.sim, cfg.seed)?;
    let n = test.len();
    let sample_seed = |i: usize| crate::trainer::sample_seeds(cfg.seed, i).seed();

    let predictions: Vec<PredictionRecord> = match cfg.method {
        Method::NoAdapt => result
            .predictions
            .iter()
            .zip(&test.labels)
            .enumerate()
            .map(|(i, (&prediction, &label))| PredictionRecord { sample_id: i as u64, label, prediction, seed: sample_seed(i) })
            .collect(),
        Method::Space => Vec::new(),
    };
    let traces = result.traces;
    let no_adapt_correct = match cfg.method {
        Method::NoAdapt => predictions.iter().filter(|p| p.prediction == p.label).count(),
        Method::Space => traces.iter().filter(|t| Some(t.pred_before) == t.label).count(),
    };
    let adapting = cfg.method == Method::Space;
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serialize_config(cfg),
        model_fingerprint: format!("{:016x}", params.fingerprint()),
        method: match cfg.method {
            Method::NoAdapt => "no_adapt".into(),
            Method::Space => "space".into(),
        },
        samples: n,
        accuracy: result.accuracy,
        no_adapt_accuracy: fraction(no_adapt_correct, n),
        space_accuracy: adapting.then_some(result.accuracy),
        mean_pre_similarity: adapting.then(|| mean(traces.iter().map(|t| t.pre_mean_sim))),
        mean_post_similarity: adapting.then(|| mean(traces.iter().map(|t| t.post_mean_sim))),
        fraction_similarity_increased: adapting
            .then(|| fraction(traces.iter().filter(|t| t.post_mean_sim > t.pre_mean_sim).count(), n)),
        fraction_loss_decreased: adapting.then(|| fraction(traces.iter().filter(|t| t.post_loss < t.pre_loss).count(), n)),
        fallbacks: traces.iter().filter(|t| t.fallback_flag).count(),
        confusion: result.confusion,
    };
    let metadata = RunMetadata {
        started_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        host: std::env::var("HOSTNAME").unwrap_or_default(),
        total_seconds: started.elapsed().as_secs_f64(),
        mean_seconds_per_sample: mean(result.seconds.iter().copied()),
    };
    Ok(RunOutcome { report, metadata, traces, predictions })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `metrics.csv` contents.
pub fn metrics_csv(outcome: &RunOutcome) -> String {
    let mut out = METRICS_COLUMNS.join(",");
    out.push('\n');
    for t in &outcome.traces {
        let label = t.label.unwrap_or(usize::MAX);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.sample_id,
            label,
            t.pred_before,
            t.pred_after,
            u8::from(t.pred_before == label),
            u8::from(t.pred_after == label),
            t.pre_loss,
            t.post_loss,
            t.pre_mean_sim,
            t.post_mean_sim,
            u8::from(t.fallback_flag),
            t.update_count
        );
    }
    for p in &outcome.predictions {
        let correct = u8::from(p.prediction == p.label);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},0,0",
            p.sample_id,
            p.label,
            p.prediction,
            p.prediction,
            correct,
            correct,
            opt(None),
            opt(None),
            opt(None),
            opt(None)
        );
    }
    out
}

/// `traces.jsonl` contents.
pub fn traces_jsonl(outcome: &RunOutcome) -> Result<String> {
    let mut out = String::new();
    for t in &outcome.traces {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    for p in &outcome.predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes all run files into `dir`, creating it if needed.
pub fn write_outputs(outcome: &RunOutcome, bins: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let report = serde_json::json!({ "body": outcome.report, "metadata": outcome.metadata });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(dir.join("traces.jsonl"), traces_jsonl(outcome)?)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(outcome))?;
    if !outcome.traces.is_empty() {
        let hist = super::similarity_histogram(&outcome.traces, bins)?;
        fs::write(dir.join("similarity_hist.csv"), hist.to_csv())?;
    }
    Ok(())
}

/// Loads the model and data named by `cfg`, runs it, and writes the outputs to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    if !cfg.model.exists() {
        return config_err(format!("model checkpoint {} not found", cfg.model.display()));
    }
    let params: Network = load_checkpoint(&cfg.model)?;
    let test = load_test_set(cfg)?;
    let outcome = execute(&params, &test, cfg)?;
    write_outputs(&outcome, cfg.hist_bins, &cfg.output_dir)?;
    Ok(outcome)
}

/// Accuracy recomputed from a `traces.jsonl` file: adapted predictions when present, else plain ones.
pub fn accuracy_from_traces(path: &Path) -> Result<(f64, usize)> {
    let file = BufReader::new(fs::File::open(path)?);
    let (mut correct, mut total) = (0usize, 0usize);
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let label = v.get("label").and_then(serde_json::Value::as_u64);
        let pred = v.get("pred_after").or_else(|| v.get("prediction")).and_then(serde_json::Value::as_u64);
        let (Some(label), Some(pred)) = (label, pred) else {
            return Err(Error::Parse { line: i + 1, message: "trace line lacks label or prediction".into() });
        };
        total += 1;
        correct += usize::from(label == pred);
    }
    Ok((fraction(correct, total), total))
}

/// Reads adaptation traces back from `traces.jsonl`.
pub fn read_traces(path: &Path) -> Result<Vec<AdaptTrace>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: String,
    pub value: String,
    pub no_adapt_accuracy: f64,
    pub accuracy: f64,
    pub mean_pre_similarity: Option<f64>,
    pub mean_post_similarity: Option<f64>,
    pub mean_seconds_per_sample: f64,
    pub output_dir: PathBuf,
}

/// Runs `base` once per value of `key`, all with the base seed.
///
/// Each point writes its run files into `<output.dir>/<key>=<value>`, and the
/// summary goes to `<output.dir>/sweep.csv`.
pub fn sweep(params: &Network, test: &Dataset, base: &ExperimentConfig, key: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        cfg.set(key, value).map_err(Error::Config)?;
        cfg.output_dir = base.output_dir.join(format!("{key}={value}"));
        let outcome = execute(params, test, &cfg)?;
        write_outputs(&outcome, cfg.hist_bins, &cfg.output_dir)?;
        rows.push(SweepRow {
            key: key.to_string(),
            value: value.clone(),
            no_adapt_accuracy: outcome.report.no_adapt_accuracy,
            accuracy: outcome.report.accuracy,
            mean_pre_similarity: outcome.report.mean_pre_similarity,
            mean_post_similarity: outcome.report.mean_post_similarity,
            mean_seconds_per_sample: outcome.metadata.mean_seconds_per_sample,
            output_dir: cfg.output_dir,
        });
    }
    fs::create_dir_all(&base.output_dir)?;
    let mut csv = String::from("key,value,no_adapt_accuracy,accuracy,mean_pre_similarity,mean_post_similarity,mean_seconds_per_sample\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.key,
            r.value,
            r.no_adapt_accuracy,
            r.accuracy,
            opt(r.mean_pre_similarity),
            opt(r.mean_post_similarity),
            r.mean_seconds_per_sample
        );
    }
    fs::write(base.output_dir.join("sweep.csv"), csv)?;
    Ok(rows)
}
