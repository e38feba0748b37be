//! Per-channel spatial distributions and their similarity.

use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use crate::error::{shape_err, Result};
use crate::scalar::Real;

/// Whether similarity is measured channel by channel or over the whole map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SimilarityScope {
    /// One softmax per channel over its `D` positions; similarities averaged over channels.
    #[default]
    LocalChannelwise,
    /// One softmax over all `C·D` entries.
    GlobalFlat,
}

/// Row-stochastic matrix: `rows` distributions over `cols` positions each.
///
/// Local normalization yields one row per channel; global normalization
/// yields a single row covering every entry of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDistribution<S> {
    pub probs: Vec<S>,
    pub rows: usize,
    pub cols: usize,
}

impl<S: Real> ChannelDistribution<S> {
    pub fn row(&self, r: usize) -> &[S] {
        &self.probs[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Max-shifted softmax of each `cols`-long row.
pub fn softmax_rows<S: Real>(values: &[S], cols: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(cols) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let start = out.len();
        let mut total = S::zero();
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|p| *p /= total);
    }
    out
}

/// `∂L/∂x` for `p = softmax(x)` per row, given `∂L/∂p`.
pub fn softmax_backward<S: Real>(probs: &[S], grad_probs: &[S], cols: usize, out: &mut [S]) {
    for ((p, g), o) in probs.chunks(cols).zip(grad_probs.chunks(cols)).zip(out.chunks_mut(cols)) {
        let dot = p.iter().zip(g).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        for ((slot, &pi), &gi) in o.iter_mut().zip(p).zip(g) {
            *slot = pi * (gi - dot);
        }
    }
}

fn distribution_of_step<S: Real>(f: &FeatureMap<S>, t: usize, scope: SimilarityScope) -> ChannelDistribution<S> {
    let values = f.step(t);
    match scope {
        SimilarityScope::LocalChannelwise => {
            ChannelDistribution { probs: softmax_rows(values, f.positions), rows: f.channels, cols: f.positions }
        }
        SimilarityScope::GlobalFlat => {
            ChannelDistribution { probs: softmax_rows(values, values.len()), rows: 1, cols: values.len() }
        }
    }
}

/// Per-step distributions under `scope`: one entry for collapsed maps, `T` for temporal maps.
pub fn normalize<S: Real>(f: &FeatureMap<S>, scope: SimilarityScope) -> Vec<ChannelDistribution<S>> {
    (0..f.steps).map(|t| distribution_of_step(f, t, scope)).collect()
}

/// Softmax of each channel over its spatial positions.
pub fn normalize_channels<S: Real>(f: &FeatureMap<S>) -> Result<ChannelDistribution<S>> {
    if !f.is_collapsed() {
        return shape_err("normalize_channels needs a time-collapsed feature map");
    }
    Ok(distribution_of_step(f, 0, SimilarityScope::LocalChannelwise))
}

/// Single softmax over every entry of the map.
pub fn normalize_global<S: Real>(f: &FeatureMap<S>) -> Result<ChannelDistribution<S>> {
    if !f.is_collapsed() {
        return shape_err("normalize_global needs a time-collapsed feature map");
    }
    Ok(distribution_of_step(f, 0, SimilarityScope::GlobalFlat))
}

/// Row-averaged inner product, `(1/C) Σ_c Σ_d P_cd Q_cd`, without clamping.
pub(crate) fn raw_similarity<S: Real>(p: &ChannelDistribution<S>, q: &ChannelDistribution<S>) -> S {
    let dot = p.probs.iter().zip(&q.probs).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    dot / S::of(p.rows as f64)
}

/// Average channel-wise inner product of two distributions, in `[0, 1]`.
pub fn similarity<S: Real>(p: &ChannelDistribution<S>, q: &ChannelDistribution<S>) -> Result<S> {
    if !p.same_layout(q) {
        return shape_err(format!("{}x{} vs {}x{} distributions", p.rows, p.cols, q.rows, q.cols));
    }
    Ok(raw_similarity(p, q).max(S::zero()).min(S::one()))
}

/// Similarity of the maps treated as single entities.
pub fn global_similarity<S: Real>(f_i: &FeatureMap<S>, f_j: &FeatureMap<S>) -> Result<S> {
    if !f_i.same_layout(f_j) {
        return shape_err("feature maps differ in shape");
    }
    similarity(&normalize_global(f_i)?, &normalize_global(f_j)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(rows: usize, cols: usize, probs: Vec<f64>) -> ChannelDistribution<f64> {
        ChannelDistribution { probs, rows, cols }
    }

    #[test]
    fn softmax_examples() {
        let f = FeatureMap::from_values(vec![0.0, 0.0], 1, 2).unwrap();
        assert_eq!(normalize_channels(&f).unwrap().probs, vec![0.5, 0.5]);
        let f = FeatureMap::from_values(vec![2f64.ln(), 0.0], 1, 2).unwrap();
        let p = normalize_channels(&f).unwrap().probs;
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let f = FeatureMap::from_values(vec![1000.0, 999.0, -1000.0, 5.0, 5.0, 5.0], 2, 3).unwrap();
        let p = normalize_channels(&f).unwrap();
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(p.probs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn similarity_examples() {
        let one_hot = dist(2, 3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(similarity(&one_hot, &one_hot).unwrap(), 1.0);
        let other = dist(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(similarity(&one_hot, &other).unwrap(), 0.0);
        let uniform = dist(1, 4, vec![0.25; 4]);
        assert_eq!(similarity(&uniform, &uniform).unwrap(), 0.25);
        assert!(similarity(&uniform, &one_hot).is_err());
    }

    #[test]
    fn global_examples() {
        let a = FeatureMap::from_values(vec![0.0; 8], 2, 4).unwrap();
        assert_eq!(global_similarity(&a, &a).unwrap(), 0.125);
        // near one-hot: a single huge entry
        let mut v = vec![0.0; 8];
        v[3] = 800.0;
        let hot = FeatureMap::from_values(v.clone(), 2, 4).unwrap();
        assert_eq!(global_similarity(&hot, &hot).unwrap(), 1.0);
        let mut w = vec![0.0; 8];
        w[6] = 800.0;
        let other = FeatureMap::from_values(w, 2, 4).unwrap();
        assert_eq!(global_similarity(&hot, &other).unwrap(), 0.0);
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let x = [0.3, -1.2, 2.0, 0.7];
        let g = [1.0, -0.5, 0.25, 2.0];
        let p = softmax_rows(&x, 4);
        let mut analytic = [0.0; 4];
        softmax_backward(&p, &g, 4, &mut analytic);
        let h = 1e-6;
        for k in 0..4 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let f = |v: &[f64]| softmax_rows(v, 4).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-8);
        }
    }
}
