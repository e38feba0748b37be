//! Noise corruptions with fixed five-level severity ladders.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Standard deviation per severity.
pub const GAUSSIAN_SIGMA: [f64; 5] = [0.04, 0.08, 0.12, 0.18, 0.26];
/// Photon budget per severity; lower means noisier.
pub const SHOT_LAMBDA: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
/// Fraction of pixels replaced by 0 or 1 per severity.
pub const IMPULSE_FRACTION: [f64; 5] = [0.01, 0.03, 0.06, 0.10, 0.17];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_noise" | "gaussian" => Ok(CorruptionKind::GaussianNoise),
            "shot_noise" | "shot" => Ok(CorruptionKind::ShotNoise),
            "impulse_noise" | "impulse" => Ok(CorruptionKind::ImpulseNoise),
            other => config_err(format!("unknown corruption kind {other:?}")),
        }
    }
}

/// Corrupts `x` at `severity` in `0..=5`; severity 0 returns the input unchanged.
pub fn corrupt(x: &Image, kind: CorruptionKind, severity: u8, rng: &mut Rng) -> Result<Image> {
    if severity > 5 {
        return config_err(format!("severity must be in 0..=5, got {severity}"));
    }
    if severity == 0 {
        return Ok(x.clone());
    }
    let level = usize::from(severity - 1);
    let mut out = x.clone();
    match kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, GAUSSIAN_SIGMA[level]).expect("positive sigma");
            out.pixels.iter_mut().for_each(|p| *p += normal.sample(rng));
        }
        CorruptionKind::ShotNoise => {
            let lambda = SHOT_LAMBDA[level];
            out.pixels.iter_mut().for_each(|p| {
                let rate = p.clamp(0.0, 1.0) * lambda;
                *p = if rate > 0.0 { Poisson::new(rate).expect("positive rate").sample(rng) / lambda } else { 0.0 };
            });
        }
        CorruptionKind::ImpulseNoise => {
            let frac = IMPULSE_FRACTION[level];
            out.pixels.iter_mut().for_each(|p| {
                if rng.random_bool(frac) {
                    *p = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                }
            });
        }
    }
    out.clamp_unit();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn severity_zero_is_identity() {
        let x = Image::filled(1, 8, 8, 0.3);
        for kind in [CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise] {
            assert_eq!(corrupt(&x, kind, 0, &mut SeedTree::new(1).rng()).unwrap(), x);
        }
        assert!(corrupt(&x, CorruptionKind::ShotNoise, 6, &mut SeedTree::new(1).rng()).is_err());
    }

    #[test]
    fn gaussian_std_matches_ladder() {
        let x = Image::filled(1, 120, 120, 0.5);
        let out = corrupt(&x, CorruptionKind::GaussianNoise, 5, &mut SeedTree::new(2).rng()).unwrap();
        let n = out.len() as f64;
        let mean = out.pixels.iter().sum::<f64>() / n;
        let std = (out.pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
        // Clamping at 0 and 1 trims the tails slightly (about 2.7% of mass lies beyond ±1.92σ).
        assert!((std - 0.26).abs() < 0.026, "std {std}");
    }

    #[test]
    fn impulse_fraction_matches_ladder() {
        let x = Image::filled(1, 200, 200, 0.5);
        let out = corrupt(&x, CorruptionKind::ImpulseNoise, 1, &mut SeedTree::new(3).rng()).unwrap();
        let flipped = out.pixels.iter().filter(|&&p| p != 0.5).count() as f64 / out.len() as f64;
        assert!((flipped - 0.01).abs() <= 0.003, "fraction {flipped}");
    }

    #[test]
    fn shot_noise_is_unbiased_and_bounded() {
        let x = Image::filled(1, 100, 100, 0.4);
        let out = corrupt(&x, CorruptionKind::ShotNoise, 3, &mut SeedTree::new(4).rng()).unwrap();
        let mean = out.pixels.iter().sum::<f64>() / out.len() as f64;
        assert!((mean - 0.4).abs() < 0.02);
        assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn names_round_trip() {
        for kind in [CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise, CorruptionKind::ImpulseNoise] {
            assert_eq!(kind.name().parse::<CorruptionKind>().unwrap(), kind);
        }
        assert!("fog".parse::<CorruptionKind>().is_err());
    }
}
