//! Configuration, experiment runs, sweeps, and significance testing.

mod config;
mod histogram;
mod run;
mod wilcoxon;

pub use config::{aggregation_name, parse_config, scope_name, serialize_config, DataConfig, ExperimentConfig, Method, KEYS, SEED_ENV};
pub use histogram::{similarity_histogram, SimilarityHistogram};
pub use run::{
    accuracy_from_traces, execute, load_test_set, metrics_csv, read_traces, run_experiment, sweep, traces_jsonl,
    write_outputs, PredictionRecord, RunMetadata, RunOutcome, RunReport, SweepRow, METRICS_COLUMNS,
};
pub use wilcoxon::{wilcoxon_signed_rank, Sidedness, WilcoxonResult, EXACT_LIMIT};
