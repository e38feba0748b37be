//! Surrogate-gradient training of the source model.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::eval::{evaluate, EvalOptions};
use crate::adapt::SimConfig;
use crate::error::{config_err, Result};
use crate::rng::SeedTree;
use crate::snn::{apply_sgd, backward, forward, poisson_encode, ArchConfig, Gradients, OutputGrad};
use crate::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    /// Per-step bias correction toward `target_rate`, applied to every spiking
    /// layer after each batch. Silent neurons get no gradient through the gate,
    /// so this is what brings them back. 0 disables it.
    pub homeostasis: f64,
    pub target_rate: f64,
    /// Target rate of the output layer, kept higher so class counts rarely tie.
    pub output_target_rate: f64,
    /// Largest global L2 norm of a batch gradient; larger ones are rescaled. 0 disables.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, eta: 0.05, batch_size: 32, homeostasis: 0.2, target_rate: 0.15, output_target_rate: 0.5, grad_clip: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Network,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean cross-entropy per completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Share of training samples classified correctly during each epoch, before each step.
    pub epoch_accuracies: Vec<f64>,
    /// `(epoch, batch)` where the loss stopped being finite; `params` is then the last good state.
    pub diverged_at: Option<(usize, usize)>,
}

/// Softmax cross-entropy of spike-count logits and its gradient w.r.t. the counts.
pub fn cross_entropy(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let loss = -(probs[label].max(f64::MIN_POSITIVE)).ln();
    let mut grad = probs;
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mini-batch SGD over the whole network with a per-epoch shuffle.
pub fn train_source(
    train: &Dataset,
    test: &Dataset,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    sim: &SimConfig,
    seeds: &SeedTree,
) -> Result<TrainOutcome> {
    let params = Network::build(arch, &mut seeds.child("init").rng())?;
    train_from(params, train, test, cfg, sim, seeds)
}

/// [`train_source`] starting from given parameters.
pub fn train_from(
    mut params: Network,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    sim: &SimConfig,
    seeds: &SeedTree,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return config_err("training set is empty");
    }
    if cfg.batch_size == 0 || !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return config_err("batch_size must be >= 1 and eta finite and >= 0");
    }
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_accuracies = Vec::with_capacity(cfg.epochs);
    let mut diverged_at = None;
    let all = params.classifier_span().end;
    let channels: Vec<usize> = params
        .layers
        .iter()
        .map(|l| if l.is_spiking() { l.output_shape().channels } else { 0 })
        .collect();

    'epochs: for epoch in 0..cfg.epochs {
        let epoch_seeds = seeds.child("epoch").index(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut epoch_seeds.child("shuffle").rng());
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&params);
            let mut batch_loss = 0.0;
            let mut rates: Vec<Vec<f64>> = channels.iter().map(|&c| vec![0.0; c]).collect();
            for &i in chunk {
                let spikes = poisson_encode(&train.images[i], sim.time_steps, &mut epoch_seeds.index(i as u64).rng())?.spikes;
                let record = forward(&params, &spikes, &sim.lif)?;
                if cfg.homeostasis > 0.0 {
                    for (l, acc) in rates.iter_mut().enumerate() {
                        for (a, r) in acc.iter_mut().zip(record.tape.channel_rates(l, channels[l])) {
                            *a += r / chunk.len() as f64;
                        }
                    }
                }
                let (loss, g) = cross_entropy(&record.prediction_scores, train.labels[i]);
                correct += usize::from(record.predicted_class() == train.labels[i]);
                batch_loss += loss;
                let seed = OutputGrad { scores: Some(g), ..Default::default() };
                grads.accumulate(&backward(&params, &record.tape, &seed)?)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            if cfg.grad_clip > 0.0 {
                let norm = grads.norm();
                if norm > cfg.grad_clip {
                    grads.scale(cfg.grad_clip / norm);
                }
            }
            if !batch_loss.is_finite() || apply_sgd(&mut params, &grads, cfg.eta, 0..all).is_err() {
                log::warn!("training diverged at epoch {epoch}, batch {b}");
                diverged_at = Some((epoch, b));
                break 'epochs;
            }
            if cfg.homeostasis > 0.0 {
                let last = params.layers.len() - 1;
                for (l, (layer, acc)) in params.layers.iter_mut().zip(&rates).enumerate() {
                    let target = if l == last { cfg.output_target_rate } else { cfg.target_rate };
                    if let Some(bias) = layer.bias_mut() {
                        for (b, r) in bias.iter_mut().zip(acc) {
                            *b += cfg.homeostasis * (target - r);
                        }
                    }
                }
            }
            total_loss += batch_loss;
        }
        let mean = total_loss / train.len() as f64;
        let acc = correct as f64 / train.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.4}, running accuracy {acc:.3}");
        epoch_losses.push(mean);
        epoch_accuracies.push(acc);
    }

    let opts = EvalOptions::default();
    let train_accuracy = evaluate(&params, train, &opts, sim, seeds.child("eval-train").seed())?.accuracy;
    let test_accuracy = evaluate(&params, test, &opts, sim, seeds.child("eval-test").seed())?.accuracy;
    Ok(TrainOutcome { params, train_accuracy, test_accuracy, epoch_losses, epoch_accuracies, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient() {
        let (loss, g) = cross_entropy(&[2.0, 0.0, 0.0, 0.0], 0);
        let p0 = 2f64.exp() / (2f64.exp() + 3.0);
        assert!((loss + p0.ln()).abs() < 1e-12);
        assert!((g[0] - (p0 - 1.0)).abs() < 1e-12);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
    }
}
