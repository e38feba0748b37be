//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

pub mod spiking_oracle;

use rand::Rng as _;
use space_tta::adapt::{softmax_rows, ChannelDistribution, FeatureMap};
use space_tta::rng::Rng;

/// Random row-stochastic distribution from Gaussian-ish logits.
pub fn random_distribution(rows: usize, cols: usize, spread: f64, rng: &mut Rng) -> ChannelDistribution<f64> {
    let logits: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-spread..spread)).collect();
    ChannelDistribution { probs: softmax_rows(&logits, cols), rows, cols }
}

pub fn random_features(channels: usize, positions: usize, scale: f64, rng: &mut Rng) -> FeatureMap<f64> {
    let values = (0..channels * positions).map(|_| rng.random_range(0.0..scale)).collect();
    FeatureMap::from_values(values, channels, positions).unwrap()
}

/// Plain softmax written without max-shifting.
pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Local consistency loss recomputed from raw feature maps by summing over all
/// ordered pairs and halving.
pub fn loss_oracle(maps: &[Vec<f64>], channels: usize, positions: usize) -> f64 {
    let probs: Vec<Vec<f64>> = maps
        .iter()
        .map(|m| m.chunks(positions).flat_map(naive_softmax).collect())
        .collect();
    let mut ordered = 0.0;
    for (a, pa) in probs.iter().enumerate() {
        for (b, pb) in probs.iter().enumerate() {
            if a != b {
                let dot: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum();
                ordered += 1.0 - dot / channels as f64;
            }
        }
    }
    ordered / 2.0
}

/// MMD² through an explicit truncated feature map of the Gaussian kernel:
/// `k(a,b) = e^{−a²/2σ²} e^{−b²/2σ²} Σ_n (ab/σ²)ⁿ / n!`.
pub fn mmd_feature_oracle(p: &[f64], q: &[f64], sigma: f64, terms: usize) -> f64 {
    let embed = |xs: &[f64]| -> Vec<f64> {
        let mut mean = vec![0.0; terms];
        for &x in xs {
            let envelope = (-x * x / (2.0 * sigma * sigma)).exp();
            let mut phi = envelope;
            for (n, slot) in mean.iter_mut().enumerate() {
                if n > 0 {
                    phi *= (x / sigma) / (n as f64).sqrt();
                }
                *slot += phi / xs.len() as f64;
            }
        }
        mean
    };
    let (mp, mq) = (embed(p), embed(q));
    mp.iter().zip(&mq).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Signed-rank statistic and one-sided p-values by enumerating all `2ⁿ` sign flips.
pub fn wilcoxon_enumeration(diffs: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let below = d.iter().filter(|v| v.abs() < d[i].abs()).count() as f64;
        let tied = d.iter().filter(|v| v.abs() == d[i].abs()).count() as f64;
        ranks[i] = below + (tied + 1.0) / 2.0;
    }
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            ge += 1;
        }
        if w <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (observed, ge as f64 / total, le as f64 / total)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`
pub fn normwise_relative(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}
