//! Source-model training on procedural shapes, and evaluation.

mod dataset;
mod eval;
mod train;

pub use dataset::{
    load_dataset_cache, read_dataset_cache, save_dataset_cache, synth_dataset, write_dataset_cache, Dataset,
    SyntheticDatasetSpec, CLASS_NAMES,
};
pub use eval::{evaluate, sample_seeds, test_input, EvalOptions, EvalResult};
pub use train::{cross_entropy, train_from, train_source, TrainConfig, TrainOutcome};
