//! Single-sample adaptation: augment, score consistency, take one SGD step, re-predict.

use serde::{Deserialize, Serialize};

use super::features::{aggregate_backward, aggregate_features, AggregationMode, FeatureMap};
use super::loss::{objective, Objective, ObjectiveConfig};
use super::similarity::SimilarityScope;
use crate::augment::{make_batch, AugmentPolicy};
use crate::error::{config_err, Result};
use crate::image::Image;
use crate::rng::SeedTree;
use crate::snn::{apply_sgd, backward, forward, poisson_encode, Gradients, LifNeuronConfig, SpikeTrain};
use crate::{Network, Record};

/// Simulation settings shared by training, evaluation, and adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub lif: LifNeuronConfig<f64>,
    pub time_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { lif: LifNeuronConfig::new(4.0, 1.0).expect("valid defaults"), time_steps: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub eta: f64,
    pub num_augments: usize,
    pub aggregation: AggregationMode,
    pub similarity_scope: SimilarityScope,
    /// Weight of the MMD penalty; 0 disables it.
    pub lambda_mmd: f64,
    pub kernel_bandwidth: f64,
    /// Gaussian smoothing along time for the spikes-through-time mode; 0 disables it.
    pub temporal_smoothing_sigma: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            eta: 0.001,
            num_augments: 32,
            aggregation: AggregationMode::SpikeCount,
            similarity_scope: SimilarityScope::LocalChannelwise,
            lambda_mmd: 0.0,
            kernel_bandwidth: 1.0,
            temporal_smoothing_sigma: 0.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return config_err(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if self.num_augments < 2 {
            return config_err(format!("num_augments must be >= 2, got {}", self.num_augments));
        }
        if !(self.lambda_mmd >= 0.0 && self.lambda_mmd.is_finite()) {
            return config_err("lambda_mmd must be finite and >= 0");
        }
        if self.lambda_mmd > 0.0 && !(self.kernel_bandwidth > 0.0) {
            return config_err("kernel_bandwidth must be > 0 when lambda_mmd > 0");
        }
        if !(self.temporal_smoothing_sigma >= 0.0) {
            return config_err("temporal_smoothing_sigma must be >= 0");
        }
        if self.temporal_smoothing_sigma > 0.0 && self.aggregation != AggregationMode::SpikesThroughTime {
            return config_err("temporal smoothing only applies to the spikes-through-time aggregation");
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            scope: self.similarity_scope,
            lambda_mmd: self.lambda_mmd,
            kernel_bandwidth: self.kernel_bandwidth,
        }
    }
}

/// What happened while adapting to one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptTrace {
    pub sample_id: u64,
    pub label: Option<usize>,
    pub pre_loss: f64,
    pub post_loss: f64,
    pub pre_mean_sim: f64,
    pub post_mean_sim: f64,
    pub pred_before: usize,
    pub pred_after: usize,
    pub fallback_flag: bool,
    pub update_count: u32,
    pub seed: u64,
    /// Pre-step similarity of every view pair. Not written to trace files.
    #[serde(skip)]
    pub pair_similarities: Vec<f64>,
}

/// Rate-codes `x` from the stream reserved for the un-augmented input.
pub fn encode_original(x: &Image, sim: &SimConfig, seeds: &SeedTree) -> Result<SpikeTrain> {
    Ok(poisson_encode(x, sim.time_steps, &mut seeds.child("original").rng())?.spikes)
}

/// Prediction on the un-augmented input; this is the no-adaptation baseline.
pub fn predict(params: &Network, x: &Image, sim: &SimConfig, seeds: &SeedTree) -> Result<(usize, Record)> {
    let record = forward(params, &encode_original(x, sim, seeds)?, &sim.lif)?;
    Ok((record.predicted_class(), record))
}

/// The augmented views of one sample and their fixed spike encodings.
#[derive(Debug, Clone)]
pub struct FrozenBatch {
    pub views: Vec<Image>,
    pub encoded: Vec<SpikeTrain>,
}

impl FrozenBatch {
    pub fn build(x: &Image, policy: &AugmentPolicy, cfg: &AdaptConfig, sim: &SimConfig, seeds: &SeedTree) -> Result<Self> {
        let views = make_batch(x, cfg.num_augments, policy, &seeds.child("augment"))?;
        let enc = seeds.child("encode");
        let encoded = views
            .iter()
            .enumerate()
            .map(|(k, v)| Ok(poisson_encode(v, sim.time_steps, &mut enc.index(k as u64).rng())?.spikes))
            .collect::<Result<_>>()?;
        Ok(Self { views, encoded })
    }
}

/// Forward passes, feature maps, and the loss for every view of a batch.
pub struct BatchEvaluation {
    pub records: Vec<Record>,
    pub features: Vec<FeatureMap<f64>>,
    pub objective: Objective<f64>,
}

/// Scores `params` on a frozen batch; gradients w.r.t. the features are included when `with_grad`.
pub fn evaluate_batch(
    params: &Network,
    batch: &FrozenBatch,
    cfg: &AdaptConfig,
    sim: &SimConfig,
    with_grad: bool,
) -> Result<BatchEvaluation> {
    let mut records = Vec::with_capacity(batch.encoded.len());
    let mut features = Vec::with_capacity(batch.encoded.len());
    for spikes in &batch.encoded {
        let record = forward(params, spikes, &sim.lif)?;
        features.push(aggregate_features(&record, cfg.aggregation, cfg.temporal_smoothing_sigma)?);
        records.push(record);
    }
    let objective = objective(&features, &cfg.objective(), with_grad)?;
    Ok(BatchEvaluation { records, features, objective })
}

/// Parameter gradient of the batch loss, summed over views in index order.
pub fn batch_gradient(params: &Network, eval: &BatchEvaluation, cfg: &AdaptConfig) -> Result<Gradients<f64>> {
    let mut total = Gradients::zeros_like(params);
    let grads = eval.objective.feature_grads.as_ref().expect("evaluated with gradients");
    for ((record, map), g) in eval.records.iter().zip(&eval.features).zip(grads) {
        let seed = aggregate_backward(g, map, cfg.temporal_smoothing_sigma)?;
        total.accumulate(&backward(params, &record.tape, &seed)?)?;
    }
    Ok(total)
}

/// Outcome of [`adapt_single`].
#[derive(Debug, Clone)]
pub struct Adapted {
    pub params: Network,
    pub prediction: usize,
    pub trace: AdaptTrace,
}

/// One round of test-time adaptation on a single input.
///
/// Builds `M` augmented views, measures their pairwise consistency at the
/// alignment layer, takes one SGD step on the extractor, and predicts the
/// original input with the updated weights. The same spike encodings are used
/// before and after the step. On any non-finite loss or gradient the update is
/// skipped and the un-adapted prediction is returned with `fallback_flag` set.
pub fn adapt_single(
    params: &Network,
    x: &Image,
    policy: &AugmentPolicy,
    cfg: &AdaptConfig,
    sim: &SimConfig,
    seeds: &SeedTree,
) -> Result<Adapted> {
    cfg.validate()?;
    policy.validate()?;
    let original = encode_original(x, sim, seeds)?;
    let pred_before = forward(params, &original, &sim.lif)?.predicted_class();
    let batch = FrozenBatch::build(x, policy, cfg, sim, seeds)?;
    let pre = evaluate_batch(params, &batch, cfg, sim, true)?;

    let mut trace = AdaptTrace {
        sample_id: 0,
        label: None,
        pre_loss: pre.objective.loss,
        post_loss: pre.objective.loss,
        pre_mean_sim: pre.objective.mean_similarity(),
        post_mean_sim: pre.objective.mean_similarity(),
        pred_before,
        pred_after: pred_before,
        fallback_flag: false,
        update_count: 0,
        seed: seeds.seed(),
        pair_similarities: pre.objective.pair_similarities.clone(),
    };
    let fallback = |mut trace: AdaptTrace| {
        trace.fallback_flag = true;
        log::warn!("adaptation skipped for seed {}: non-finite loss or gradient", trace.seed);
        Ok(Adapted { params: params.clone(), prediction: pred_before, trace })
    };
    if !pre.objective.loss.is_finite() {
        return fallback(trace);
    }

    let grads = batch_gradient(params, &pre, cfg)?;
    let mut next = params.clone();
    if apply_sgd(&mut next, &grads, cfg.eta, params.extractor_span()).is_err() {
        return fallback(trace);
    }
    trace.update_count = 1;
    drop(pre);

    let post = evaluate_batch(&next, &batch, cfg, sim, false)?;
    trace.post_loss = post.objective.loss;
    trace.post_mean_sim = post.objective.mean_similarity();
    let pred_after = forward(&next, &original, &sim.lif)?.predicted_class();
    trace.pred_after = pred_after;
    Ok(Adapted { params: next, prediction: pred_after, trace })
}
