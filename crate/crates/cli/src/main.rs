use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use space_tta::harness::{
    accuracy_from_traces, load_test_set, parse_config, read_traces, run_experiment, serialize_config,
    similarity_histogram, sweep, wilcoxon_signed_rank, ExperimentConfig, Sidedness,
};
use space_tta::rng::SeedTree;
use space_tta::snn::{load_checkpoint, save_checkpoint};
use space_tta::trainer::{load_dataset_cache, save_dataset_cache, synth_dataset, train_source};
use space_tta::Network;

/// Spiking-network test-time adaptation experiments.
#[derive(Parser)]
#[command(name = "space", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a source model on the procedural dataset and save its checkpoint to `model`.
    Train(ConfigArgs),
    /// Evaluate one configuration and write the run files to `output.dir`.
    Run(ConfigArgs),
    /// Run one configuration per value of a config key.
    Sweep {
        /// Config key to vary, e.g. adapt.eta or adapt.num_augments.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Wilcoxon signed-rank test on paired samples.
    Wilcoxon {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        y: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Side::Greater)]
        sidedness: Side,
    },
    /// Recompute accuracy and similarity histograms from a run directory.
    Report {
        /// Run directory holding traces.jsonl and report.json.
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Print the effective configuration.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Greater,
    Less,
    TwoSided,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--dotted.key value` pairs, applied after the file and SPACE_SEED.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    let mut it = args.overrides.iter();
    while let Some(flag) = it.next() {
        let Some(stripped) = flag.strip_prefix("--") else {
            bail!("expected --key, got {flag:?}");
        };
        let (key, value) = match stripped.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("missing value for --{stripped}"))?;
                (stripped.to_string(), v.clone())
            }
        };
        cfg.set(&key, &value).map_err(anyhow::Error::msg)?;
    }
    cfg.sync_arch();
    cfg.validate()?;
    Ok(cfg)
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let seeds = SeedTree::new(cfg.data.seed);
    let (train_set, test_set) = if !cfg.data.cache.as_os_str().is_empty() && cfg.data.cache.exists() {
        load_dataset_cache(&cfg.data.cache)?
    } else {
        let sets = synth_dataset(&cfg.data.spec, &seeds)?;
        if !cfg.data.cache.as_os_str().is_empty() {
            save_dataset_cache(&sets.0, &sets.1, &cfg.data.cache)?;
        }
        sets
    };
    let outcome = train_source(&train_set, &test_set, &cfg.arch, &cfg.train, &cfg.sim, &SeedTree::new(cfg.seed).child("train"))?;
    if let Some(parent) = cfg.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&outcome.params, &cfg.model)?;
    let summary = serde_json::json!({
        "model": cfg.model,
        "train_accuracy": outcome.train_accuracy,
        "test_accuracy": outcome.test_accuracy,
        "epoch_losses": outcome.epoch_losses,
        "diverged_at": outcome.diverged_at,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn report(dir: &Path, bins: usize) -> Result<bool> {
    let traces_path = dir.join("traces.jsonl");
    let (accuracy, samples) = accuracy_from_traces(&traces_path)?;
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let reported = report["body"]["accuracy"].as_f64();
    let matches = reported == Some(accuracy);
    let mut summary = serde_json::json!({
        "samples": samples,
        "recomputed_accuracy": accuracy,
        "reported_accuracy": reported,
        "consistent": matches,
    });
    if let Ok(traces) = read_traces(&traces_path) {
        if !traces.is_empty() {
            let hist = similarity_histogram(&traces, bins)?;
            std::fs::write(dir.join("similarity_hist.csv"), hist.to_csv())?;
            summary["mean_pre_similarity"] = hist.mean_before.into();
            summary["mean_post_similarity"] = hist.mean_after.into();
            summary["fraction_similarity_increased"] = hist.fraction_increased.into();
        }
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(matches)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    match Cli::parse().command {
        Command::Train(args) => train(&load_config(&args)?)?,
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let outcome = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
        }
        Command::Sweep { axis, values, config } => {
            let cfg = load_config(&config)?;
            if !cfg.model.exists() {
                bail!("model checkpoint {} not found", cfg.model.display());
            }
            let params: Network = load_checkpoint(&cfg.model)?;
            let test = load_test_set(&cfg)?;
            let rows = sweep(&params, &test, &cfg, &axis, &values)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::Wilcoxon { x, y, sidedness } => {
            let side = match sidedness {
                Side::Greater => Sidedness::Greater,
                Side::Less => Sidedness::Less,
                Side::TwoSided => Sidedness::TwoSided,
            };
            println!("{}", serde_json::to_string_pretty(&wilcoxon_signed_rank(&x, &y, side)?)?);
        }
        Command::Report { dir, bins } => return report(&dir, bins),
        Command::Config(args) => print!("{}", serialize_config(&load_config(&args)?)),
    }
    Ok(true)
}
