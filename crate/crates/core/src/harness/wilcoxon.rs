//! Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by the exact null distribution.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sidedness {
    /// Alternative: `x` tends to exceed `y`.
    Greater,
    /// Alternative: `x` tends to fall below `y`.
    Less,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences `x − y`.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    /// p-value for the requested alternative.
    pub p_value: f64,
    pub p_greater: f64,
    pub p_less: f64,
    pub p_two_sided: f64,
    /// Whether p-values come from the exact null distribution.
    pub exact: bool,
}

/// Average ranks of `|d|`, doubled so ties stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled: (i+1 + j+1)
        let r = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments giving each doubled positive-rank sum.
fn null_counts(ranks: &[u64]) -> Vec<u64> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], sidedness: Sidedness) -> Result<WilcoxonResult> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("paired samples need equal non-zero lengths, got {} and {}", x.len(), y.len())));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::UndefinedTest("differences must be finite".into()));
    }
    if diffs.is_empty() {
        return Err(Error::UndefinedTest("all paired differences are zero".into()));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let statistic = w2 as f64 / 2.0;

    let (p_greater, p_less, exact) = if n <= EXACT_LIMIT {
        let counts = null_counts(&ranks);
        let all = (1u64 << n) as f64;
        let upper: u64 = counts[w2 as usize..].iter().sum();
        let lower: u64 = counts[..=w2 as usize].iter().sum();
        (upper as f64 / all, lower as f64 / all, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            var -= (t * t * t - t) / 48.0;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let sd = var.sqrt();
        let z_upper = (statistic - mean - 0.5) / sd;
        let z_lower = (statistic - mean + 0.5) / sd;
        (normal.sf(z_upper), normal.cdf(z_lower), false)
    };
    let p_two_sided = (2.0 * p_greater.min(p_less)).min(1.0);
    let p_value = match sidedness {
        Sidedness::Greater => p_greater,
        Sidedness::Less => p_less,
        Sidedness::TwoSided => p_two_sided,
    };
    Ok(WilcoxonResult { statistic, n, p_value, p_greater, p_less, p_two_sided, exact })
}
