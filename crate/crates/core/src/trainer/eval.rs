//! Per-sample evaluation, optionally corrupted and optionally adapted.

use super::dataset::Dataset;
use crate::adapt::{adapt_single, predict, AdaptConfig, AdaptTrace, SimConfig};
use crate::augment::{corrupt, AugmentPolicy, CorruptionKind};
use crate::error::Result;
use crate::image::Image;
use crate::rng::SeedTree;
use crate::Network;

/// What to do with each test sample.
#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub corruption: Option<(CorruptionKind, u8)>,
    /// Adapt to each sample from the pristine model before predicting.
    pub adapt: Option<(AugmentPolicy, AdaptConfig)>,
    /// Keep adapted weights from one sample to the next instead of resetting.
    pub carry_state: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `confusion[label][prediction]`
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    /// One per sample when adapting.
    pub traces: Vec<AdaptTrace>,
    /// Per-sample wall time in seconds, in sample order.
    pub seconds: Vec<f64>,
}

/// Random stream root for sample `i` of a run seeded with `seed`.
pub fn sample_seeds(seed: u64, i: usize) -> SeedTree {
    SeedTree::new(seed).child("sample").index(i as u64)
}

/// The (possibly corrupted) input seen for sample `i`.
pub fn test_input(x: &Image, corruption: Option<(CorruptionKind, u8)>, seeds: &SeedTree) -> Result<Image> {
    match corruption {
        Some((kind, severity)) => corrupt(x, kind, severity, &mut seeds.child("corrupt").rng()),
        None => Ok(x.clone()),
    }
}

/// Batch-size-1 evaluation of every sample in order.
pub fn evaluate(params: &Network, data: &Dataset, opts: &EvalOptions, sim: &SimConfig, seed: u64) -> Result<EvalResult> {
    let k = data.num_classes;
    let mut confusion = vec![vec![0; k]; k];
    let mut predictions = Vec::with_capacity(data.len());
    let mut traces = Vec::new();
    let mut seconds = Vec::with_capacity(data.len());
    let mut carried = params.clone();
    for (i, (x, &label)) in data.images.iter().zip(&data.labels).enumerate() {
        let start = std::time::Instant::now();
        let seeds = sample_seeds(seed, i);
        let input = test_input(x, opts.corruption, &seeds)?;
        let pred = match &opts.adapt {
            None => predict(params, &input, sim, &seeds)?.0,
            Some((policy, cfg)) => {
                let base = if opts.carry_state { &carried } else { params };
                let mut out = adapt_single(base, &input, policy, cfg, sim, &seeds)?;
                out.trace.sample_id = i as u64;
                out.trace.label = Some(label);
                traces.push(out.trace);
                if opts.carry_state {
                    carried = out.params;
                }
                out.prediction
            }
        };
        seconds.push(start.elapsed().as_secs_f64());
        confusion[label][pred.min(k - 1)] += 1;
        predictions.push(pred);
    }
    let correct = predictions.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    let accuracy = if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 };
    Ok(EvalResult { accuracy, confusion, predictions, traces, seconds })
}
