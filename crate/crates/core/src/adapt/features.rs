//! Time aggregation of alignment-layer activity into feature maps.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::scalar::Real;
use crate::snn::{ForwardRecord, OutputGrad};

/// How alignment-layer activity is summarized over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AggregationMode {
    /// Spike totals per neuron.
    #[default]
    SpikeCount,
    /// Mean post-reset membrane potential.
    AvgMembranePotential,
    /// Spikes kept per time step, optionally smoothed along time.
    SpikesThroughTime,
}

/// Aggregated activity, `steps × C × D` with `steps == 1` for the collapsed modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    pub values: Vec<S>,
    pub channels: usize,
    pub positions: usize,
    pub steps: usize,
    pub source_mode: AggregationMode,
    pub time_steps: usize,
}

impl<S: Real> FeatureMap<S> {
    /// Collapsed `C × D` map.
    pub fn from_values(values: Vec<S>, channels: usize, positions: usize) -> Result<Self> {
        if values.len() != channels * positions || channels == 0 || positions == 0 {
            return shape_err(format!("{} values for a {channels}x{positions} feature map", values.len()));
        }
        Ok(Self { values, channels, positions, steps: 1, source_mode: AggregationMode::SpikeCount, time_steps: 1 })
    }

    pub fn is_collapsed(&self) -> bool {
        self.steps == 1 && self.source_mode != AggregationMode::SpikesThroughTime
    }

    /// The `C × D` slice for one step.
    pub fn step(&self, t: usize) -> &[S] {
        let n = self.channels * self.positions;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        (self.channels, self.positions, self.steps) == (other.channels, other.positions, other.steps)
    }
}

/// Discrete Gaussian along time as a `T × T` matrix: `out_t = Σ_τ K[t][τ]·in_τ`.
///
/// Support is truncated at `⌈3σ⌉`, weights are normalized, and indices past
/// either end reflect back (`−1 → 0`, `T → T−1`). `σ = 0` gives the identity.
pub fn temporal_smoothing_matrix(steps: usize, sigma: f64) -> Vec<f64> {
    let mut k = vec![0.0; steps * steps];
    if sigma <= 0.0 {
        for t in 0..steps {
            k[t * steps + t] = 1.0;
        }
        return k;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius).map(|o| (-(o * o) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let reflect = |mut i: isize| -> usize {
        let n = steps as isize;
        let period = 2 * n;
        i = i.rem_euclid(period);
        (if i < n { i } else { period - 1 - i }) as usize
    };
    for t in 0..steps {
        for (w, o) in weights.iter().zip(-radius..=radius) {
            k[t * steps + reflect(t as isize + o)] += w / total;
        }
    }
    k
}

/// Builds the alignment feature map from a forward record.
pub fn aggregate_features<S: Real>(
    record: &ForwardRecord<S>,
    mode: AggregationMode,
    temporal_smoothing_sigma: f64,
) -> Result<FeatureMap<S>> {
    if temporal_smoothing_sigma > 0.0 && mode != AggregationMode::SpikesThroughTime {
        return config_err("temporal smoothing only applies to the spikes-through-time mode");
    }
    if !(temporal_smoothing_sigma >= 0.0) {
        return config_err("temporal smoothing sigma must be >= 0");
    }
    let spikes = &record.alignment_spikes;
    let steps = spikes.time_steps();
    let (channels, positions) = match spikes.shape() {
        [c, h, w] => (*c, h * w),
        [n] => (*n, 1),
        other => return shape_err(format!("unexpected alignment shape {other:?}")),
    };
    let n = channels * positions;
    if record.alignment_potentials.len() != steps * n {
        return shape_err("alignment spikes and potentials differ in shape");
    }
    let values: Vec<S> = match mode {
        AggregationMode::SpikeCount => spikes.counts().into_iter().map(|c| S::of(f64::from(c))).collect(),
        AggregationMode::AvgMembranePotential => {
            let mut acc = vec![S::zero(); n];
            for t in 0..steps {
                for (a, &u) in acc.iter_mut().zip(&record.alignment_potentials[t * n..(t + 1) * n]) {
                    *a += u;
                }
            }
            let inv = S::one() / S::of(steps as f64);
            acc.into_iter().map(|a| a * inv).collect()
        }
        AggregationMode::SpikesThroughTime => {
            let raw: Vec<S> = spikes.as_slice().iter().map(|&s| if s { S::one() } else { S::zero() }).collect();
            if temporal_smoothing_sigma == 0.0 {
                raw
            } else {
                let k = temporal_smoothing_matrix(steps, temporal_smoothing_sigma);
                let mut out = vec![S::zero(); steps * n];
                for t in 0..steps {
                    for tau in 0..steps {
                        let w = k[t * steps + tau];
                        if w == 0.0 {
                            continue;
                        }
                        let w = S::of(w);
                        for i in 0..n {
                            out[t * n + i] += w * raw[tau * n + i];
                        }
                    }
                }
                out
            }
        }
    };
    let out_steps = if mode == AggregationMode::SpikesThroughTime { steps } else { 1 };
    Ok(FeatureMap { values, channels, positions, steps: out_steps, source_mode: mode, time_steps: steps })
}

/// Maps `∂L/∂F` back onto the alignment spikes or potentials.
pub fn aggregate_backward<S: Real>(
    grad: &[S],
    map: &FeatureMap<S>,
    temporal_smoothing_sigma: f64,
) -> Result<OutputGrad<S>> {
    if grad.len() != map.values.len() {
        return shape_err(format!("feature gradient has {} entries, map has {}", grad.len(), map.values.len()));
    }
    let steps = map.time_steps;
    let n = map.channels * map.positions;
    let tiled = |scale: S| {
        let mut out = Vec::with_capacity(steps * n);
        for _ in 0..steps {
            out.extend(grad.iter().map(|&g| g * scale));
        }
        out
    };
    Ok(match map.source_mode {
        AggregationMode::SpikeCount => OutputGrad { alignment_spikes: Some(tiled(S::one())), ..Default::default() },
        AggregationMode::AvgMembranePotential => OutputGrad {
            alignment_potentials: Some(tiled(S::one() / S::of(steps as f64))),
            ..Default::default()
        },
        AggregationMode::SpikesThroughTime => {
            let k = temporal_smoothing_matrix(steps, temporal_smoothing_sigma);
            let mut out = vec![S::zero(); steps * n];
            for t in 0..steps {
                for tau in 0..steps {
                    let w = k[t * steps + tau];
                    if w == 0.0 {
                        continue;
                    }
                    let w = S::of(w);
                    for i in 0..n {
                        out[tau * n + i] += w * grad[t * n + i];
                    }
                }
            }
            OutputGrad { alignment_spikes: Some(out), ..Default::default() }
        }
    })
}
