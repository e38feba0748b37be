//! Before/after histograms of mean pairwise similarity.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptTrace;
use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    /// `bins + 1` equally spaced edges over `[0, 1]`.
    pub edges: Vec<f64>,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub mean_before: f64,
    pub mean_after: f64,
    /// Share of samples whose similarity rose after the update.
    pub fraction_increased: f64,
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

pub fn similarity_histogram(traces: &[AdaptTrace], bins: usize) -> Result<SimilarityHistogram> {
    if traces.is_empty() {
        return config_err("no traces to summarize");
    }
    if bins == 0 {
        return config_err("need at least one bin");
    }
    let mut before = vec![0; bins];
    let mut after = vec![0; bins];
    for t in traces {
        before[bin_of(t.pre_mean_sim, bins)] += 1;
        after[bin_of(t.post_mean_sim, bins)] += 1;
    }
    let n = traces.len() as f64;
    Ok(SimilarityHistogram {
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        before,
        after,
        mean_before: traces.iter().map(|t| t.pre_mean_sim).sum::<f64>() / n,
        mean_after: traces.iter().map(|t| t.post_mean_sim).sum::<f64>() / n,
        fraction_increased: traces.iter().filter(|t| t.post_mean_sim > t.pre_mean_sim).count() as f64 / n,
    })
}

impl SimilarityHistogram {
    /// `bin_start,bin_end,before,after` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,before,after\n");
        for i in 0..self.before.len() {
            let _ = writeln!(out, "{},{},{},{}", self.edges[i], self.edges[i + 1], self.before[i], self.after[i]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(pre: f64, post: f64) -> AdaptTrace {
        AdaptTrace {
            sample_id: 0,
            label: None,
            pre_loss: 0.0,
            post_loss: 0.0,
            pre_mean_sim: pre,
            post_mean_sim: post,
            pred_before: 0,
            pred_after: 0,
            fallback_flag: false,
            update_count: 1,
            seed: 0,
            pair_similarities: vec![],
        }
    }

    #[test]
    fn unchanged_traces_give_identical_histograms() {
        let traces: Vec<_> = [0.0, 0.2, 0.5, 1.0, 0.99].iter().map(|&v| trace(v, v)).collect();
        let h = similarity_histogram(&traces, 10).unwrap();
        assert_eq!(h.before, h.after);
        assert_eq!(h.before.iter().sum::<usize>(), 5);
        assert_eq!(h.before[9], 2);
        assert_eq!(h.fraction_increased, 0.0);
        assert!(similarity_histogram(&[], 10).is_err());
    }

    #[test]
    fn counts_and_csv() {
        let h = similarity_histogram(&[trace(0.1, 0.3), trace(0.2, 0.25)], 4).unwrap();
        assert_eq!(h.before, vec![2, 0, 0, 0]);
        assert_eq!(h.after, vec![0, 2, 0, 0]);
        assert_eq!(h.fraction_increased, 1.0);
        assert!(h.to_csv().starts_with("bin_start,bin_end,before,after\n0,0.25,2,0\n"));
    }
}
