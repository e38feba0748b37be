//! Mixture-of-chains augmentation and augmented-batch construction.

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::ops::{
    apply, OpParams, Operator, MAX_ENHANCE, MAX_POSTERIZE_DROP, MAX_ROTATE_DEG, MAX_SHEAR, MAX_TRANSLATE_FRAC,
};
use crate::error::{config_err, Result};
use crate::image::Image;
use crate::rng::{Rng, SeedTree};

/// Largest supported strength; at this level magnitudes may reach their caps.
pub const MAX_STRENGTH: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    /// Operators chains are drawn from. An empty pool makes every chain the identity.
    pub operators: Vec<Operator>,
    /// Number of chains mixed per sample.
    pub mixture_width: usize,
    /// Chain length is drawn uniformly from `depth_min..=depth_max`.
    pub depth_min: usize,
    pub depth_max: usize,
    /// Magnitude level `s`, `1..=10`.
    pub strength: u32,
    /// Concentration of the Dirichlet chain weights and the Beta blend.
    pub alpha: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { operators: Operator::ALL.to_vec(), mixture_width: 3, depth_min: 1, depth_max: 3, strength: 1, alpha: 1.0 }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.mixture_width == 0 {
            return config_err("mixture_width must be >= 1");
        }
        if self.depth_min == 0 || self.depth_min > self.depth_max {
            return config_err(format!("invalid chain depth range {}..={}", self.depth_min, self.depth_max));
        }
        if !(1..=MAX_STRENGTH).contains(&self.strength) {
            return config_err(format!("augmentation strength must be in 1..={MAX_STRENGTH}, got {}", self.strength));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return config_err("alpha must be a positive finite number");
        }
        Ok(())
    }

    /// Fraction of an operator's cap, drawn as `U(0.1, s) / 10`.
    fn level(&self, rng: &mut Rng) -> f64 {
        let s = f64::from(self.strength);
        if s <= 0.1 {
            return s / 10.0;
        }
        rng.random_range(0.1..=s) / 10.0
    }

    fn signed(&self, rng: &mut Rng) -> f64 {
        let v = self.level(rng);
        if rng.random_bool(0.5) {
            -v
        } else {
            v
        }
    }

    /// Draws concrete parameters for `op` on an image of the given size.
    pub fn draw(&self, op: Operator, height: usize, width: usize, rng: &mut Rng) -> OpParams {
        match op {
            Operator::Rotate => {
                let degrees = self.signed(rng) * MAX_ROTATE_DEG;
                assert!(degrees.abs() <= MAX_ROTATE_DEG, "rotation {degrees} exceeds cap");
                OpParams::Rotate { degrees }
            }
            Operator::Translate => {
                let (cap_x, cap_y) = (MAX_TRANSLATE_FRAC * width as f64, MAX_TRANSLATE_FRAC * height as f64);
                let (dx, dy) = if rng.random_bool(0.5) {
                    (self.signed(rng) * cap_x, 0.0)
                } else {
                    (0.0, self.signed(rng) * cap_y)
                };
                assert!(dx.abs() <= cap_x && dy.abs() <= cap_y, "translation ({dx}, {dy}) exceeds cap");
                OpParams::Translate { dx, dy }
            }
            Operator::Shear => {
                let factor = self.signed(rng) * MAX_SHEAR;
                assert!(factor.abs() <= MAX_SHEAR);
                OpParams::Shear { factor }
            }
            Operator::HorizontalFlip => OpParams::HorizontalFlip,
            Operator::Contrast => OpParams::Contrast { factor: 1.0 + self.signed(rng) * MAX_ENHANCE },
            Operator::Brightness => OpParams::Brightness { factor: 1.0 + self.signed(rng) * MAX_ENHANCE },
            Operator::Posterize => {
                let drop = (self.level(rng) * MAX_POSTERIZE_DROP).round() as u32;
                OpParams::Posterize { bits: 8 - drop }
            }
        }
    }
}

/// Weights from a symmetric Dirichlet, via normalized Gamma draws.
fn dirichlet(alpha: f64, k: usize, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        w = vec![1.0 / k as f64; k];
    }
    w
}

/// One augmented view: chains of operators mixed by Dirichlet weights, then
/// blended with the original by a Beta-distributed coefficient.
pub fn augmix_sample(x: &Image, policy: &AugmentPolicy, rng: &mut Rng) -> Result<Image> {
    policy.validate()?;
    let weights = dirichlet(policy.alpha, policy.mixture_width, rng);
    let blend = Beta::new(policy.alpha, policy.alpha).expect("alpha validated").sample(rng);
    let mut mix = vec![0.0; x.len()];
    for &w in &weights {
        let mut view = x.clone();
        if !policy.operators.is_empty() {
            let depth = rng.random_range(policy.depth_min..=policy.depth_max);
            for _ in 0..depth {
                let op = policy.operators[rng.random_range(0..policy.operators.len())];
                view = apply(&view, policy.draw(op, x.height, x.width, rng));
            }
        }
        mix.iter_mut().zip(&view.pixels).for_each(|(m, &v)| *m += w * v);
    }
    let mut out = x.clone();
    out.pixels.iter_mut().zip(&mix).for_each(|(p, &m)| *p = (1.0 - blend) * *p + blend * m);
    out.clamp_unit();
    Ok(out)
}

/// `m` augmented views, view `k` drawn from the stream `seeds.index(k)`.
///
/// The original image is not part of the batch.
pub fn make_batch(x: &Image, m: usize, policy: &AugmentPolicy, seeds: &SeedTree) -> Result<Vec<Image>> {
    if m < 2 {
        return config_err(format!("an augmented batch needs at least 2 views, got {m}"));
    }
    (0..m).map(|k| augmix_sample(x, policy, &mut seeds.index(k as u64).rng())).collect()
}
