//! Pairwise consistency loss over augmented views and its gradient.

use super::features::FeatureMap;
use super::mmd::{kernel_sum_grad, mmd_squared};
use super::similarity::{normalize, raw_similarity, similarity, softmax_backward, ChannelDistribution, SimilarityScope};
use crate::error::{config_err, shape_err, Result};
use crate::scalar::Real;

/// Unordered view pairs `(i, j)` with `j < i`, in the order losses are summed.
pub fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..m).flat_map(|i| (0..i).map(move |j| (i, j)))
}

fn check_views<S: Real>(dists: &[ChannelDistribution<S>]) -> Result<()> {
    if dists.len() < 2 {
        return config_err(format!("consistency loss needs at least 2 views, got {}", dists.len()));
    }
    if dists.iter().any(|d| !d.same_layout(&dists[0])) {
        return shape_err("views have differently shaped distributions");
    }
    Ok(())
}

/// `S̄(i, j)` for every pair, in [`pairs`] order.
pub fn pairwise_similarities<S: Real>(dists: &[ChannelDistribution<S>]) -> Result<Vec<S>> {
    check_views(dists)?;
    pairs(dists.len()).map(|(i, j)| similarity(&dists[i], &dists[j])).collect()
}

/// `Σ_{j<i} (1 − S̄(i, j))`.
///
/// The scope is carried by the distributions: channel-wise rows give the local
/// loss, a single flattened row gives the global one.
pub fn consistency_loss<S: Real>(dists: &[ChannelDistribution<S>]) -> Result<S> {
    let mut loss = S::zero();
    for s in pairwise_similarities(dists)? {
        loss += S::one() - s;
    }
    Ok(loss)
}

/// Channel-averaged MMD² summed over pairs.
pub fn mmd_penalty<S: Real>(dists: &[ChannelDistribution<S>], sigma: S) -> Result<S> {
    check_views(dists)?;
    let rows = dists[0].rows;
    let mut total = S::zero();
    for (i, j) in pairs(dists.len()) {
        let mut acc = S::zero();
        for r in 0..rows {
            acc += mmd_squared(dists[i].row(r), dists[j].row(r), sigma)?;
        }
        total += acc / S::of(rows as f64);
    }
    Ok(total)
}

/// Consistency loss plus `λ` times the pairwise MMD penalty.
pub fn combined_loss<S: Real>(dists: &[ChannelDistribution<S>], lambda_mmd: S, sigma: S) -> Result<S> {
    if lambda_mmd < S::zero() {
        return config_err("lambda_mmd must be >= 0");
    }
    let base = consistency_loss(dists)?;
    if lambda_mmd == S::zero() {
        return Ok(base);
    }
    Ok(base + lambda_mmd * mmd_penalty(dists, sigma)?)
}

/// Knobs of the adaptation objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub scope: SimilarityScope,
    pub lambda_mmd: f64,
    pub kernel_bandwidth: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { scope: SimilarityScope::LocalChannelwise, lambda_mmd: 0.0, kernel_bandwidth: 1.0 }
    }
}

/// Loss over a set of views, with optional gradients w.r.t. each view's feature values.
#[derive(Debug, Clone)]
pub struct Objective<S> {
    pub loss: S,
    /// Per-pair similarity in [`pairs`] order, averaged over steps for temporal maps.
    pub pair_similarities: Vec<S>,
    pub feature_grads: Option<Vec<Vec<S>>>,
}

impl<S: Real> Objective<S> {
    pub fn mean_similarity(&self) -> S {
        let n = self.pair_similarities.len().max(1);
        self.pair_similarities.iter().fold(S::zero(), |a, &b| a + b) / S::of(n as f64)
    }
}

/// Loss of the feature maps of `M` views.
///
/// Temporal maps are scored step by step and the losses averaged over steps.
pub fn objective<S: Real>(features: &[FeatureMap<S>], cfg: &ObjectiveConfig, with_grad: bool) -> Result<Objective<S>> {
    let m = features.len();
    if m < 2 {
        return config_err(format!("consistency loss needs at least 2 views, got {m}"));
    }
    if features.iter().any(|f| !f.same_layout(&features[0])) {
        return shape_err("views have differently shaped feature maps");
    }
    if !(cfg.lambda_mmd >= 0.0) || (cfg.lambda_mmd > 0.0 && !(cfg.kernel_bandwidth > 0.0)) {
        return config_err("lambda_mmd must be >= 0 and the kernel bandwidth > 0 when it is used");
    }
    let steps = features[0].steps;
    let n = features[0].channels * features[0].positions;
    let inv_steps = S::one() / S::of(steps as f64);
    let lambda = S::of(cfg.lambda_mmd);
    let sigma = S::of(cfg.kernel_bandwidth);

    let per_view: Vec<Vec<ChannelDistribution<S>>> = features.iter().map(|f| normalize(f, cfg.scope)).collect();
    let mut loss = S::zero();
    let mut sims = vec![S::zero(); m * (m - 1) / 2];
    let mut grads = with_grad.then(|| vec![vec![S::zero(); steps * n]; m]);

    for t in 0..steps {
        let dists: Vec<ChannelDistribution<S>> = per_view.iter().map(|v| v[t].clone()).collect();
        let step_loss = combined_loss(&dists, lambda, sigma)?;
        loss += step_loss * inv_steps;
        for (slot, s) in sims.iter_mut().zip(pairwise_similarities(&dists)?) {
            *slot += s * inv_steps;
        }
        if let Some(grads) = grads.as_mut() {
            let (rows, cols) = (dists[0].rows, dists[0].cols);
            let inv_rows = S::one() / S::of(rows as f64);
            let mut total = vec![S::zero(); n];
            for d in &dists {
                total.iter_mut().zip(&d.probs).for_each(|(a, &p)| *a += p);
            }
            let mmd_scale = S::of(2.0) / S::of((cols * cols) as f64) * lambda * inv_rows;
            for (k, d) in dists.iter().enumerate() {
                // ∂L/∂P_k: the similarity part is −(1/R)·Σ_{j≠k} P_j.
                let mut g: Vec<S> = total.iter().zip(&d.probs).map(|(&a, &p)| -(a - p) * inv_rows).collect();
                if lambda > S::zero() {
                    let others = S::of((m - 1) as f64);
                    for r in 0..rows {
                        let x = d.row(r);
                        let out = &mut g[r * cols..(r + 1) * cols];
                        kernel_sum_grad(x, x, sigma, mmd_scale * others, out);
                        for (j, other) in dists.iter().enumerate() {
                            if j != k {
                                kernel_sum_grad(x, other.row(r), sigma, -mmd_scale, out);
                            }
                        }
                    }
                }
                let mut dx = vec![S::zero(); n];
                softmax_backward(&d.probs, &g, cols, &mut dx);
                let slot = &mut grads[k][t * n..(t + 1) * n];
                slot.iter_mut().zip(&dx).for_each(|(a, &b)| *a += b * inv_steps);
            }
        }
    }
    Ok(Objective { loss, pair_similarities: sims, feature_grads: grads })
}

/// Loss value alone, using the unclamped similarity; handy for finite differences.
pub fn objective_value<S: Real>(features: &[FeatureMap<S>], cfg: &ObjectiveConfig) -> Result<S> {
    let steps = features.first().map_or(1, |f| f.steps);
    let per_view: Vec<Vec<ChannelDistribution<S>>> = features.iter().map(|f| normalize(f, cfg.scope)).collect();
    let mut loss = S::zero();
    for t in 0..steps {
        let dists: Vec<ChannelDistribution<S>> = per_view.iter().map(|v| v[t].clone()).collect();
        check_views(&dists)?;
        let mut step = S::zero();
        for (i, j) in pairs(dists.len()) {
            step += S::one() - raw_similarity(&dists[i], &dists[j]);
        }
        if cfg.lambda_mmd > 0.0 {
            step += S::of(cfg.lambda_mmd) * mmd_penalty(&dists, S::of(cfg.kernel_bandwidth))?;
        }
        loss += step / S::of(steps as f64);
    }
    Ok(loss)
}
