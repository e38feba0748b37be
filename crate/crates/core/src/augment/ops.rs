//! Label-preserving image operators.

use serde::{Deserialize, Serialize};

use crate::image::Image;

/// Rotation cap in degrees.
pub const MAX_ROTATE_DEG: f64 = 30.0;
/// Translation cap as a fraction of the image side (16 px on a 32 px image).
pub const MAX_TRANSLATE_FRAC: f64 = 0.5;
/// Shear cap (horizontal offset per row, relative).
pub const MAX_SHEAR: f64 = 0.3;
/// Contrast and brightness factors stay within `1 ± MAX_ENHANCE`.
pub const MAX_ENHANCE: f64 = 0.9;
/// At most this many low bits are dropped by posterize.
pub const MAX_POSTERIZE_DROP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Rotate,
    Translate,
    Shear,
    HorizontalFlip,
    Contrast,
    Brightness,
    Posterize,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::Rotate,
        Operator::Translate,
        Operator::Shear,
        Operator::HorizontalFlip,
        Operator::Contrast,
        Operator::Brightness,
        Operator::Posterize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Rotate => "rotate",
            Operator::Translate => "translate",
            Operator::Shear => "shear",
            Operator::HorizontalFlip => "hflip",
            Operator::Contrast => "contrast",
            Operator::Brightness => "brightness",
            Operator::Posterize => "posterize",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

/// A concrete operator application. Parameters are in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpParams {
    Rotate { degrees: f64 },
    Translate { dx: f64, dy: f64 },
    Shear { factor: f64 },
    HorizontalFlip,
    Contrast { factor: f64 },
    Brightness { factor: f64 },
    Posterize { bits: u32 },
}

/// Symmetric reflection of an index onto `0..n` (`−1 → 0`, `n → n−1`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let i = i.rem_euclid(period);
    (if i < n { i } else { period - 1 - i }) as usize
}

/// Bilinear sample at a continuous position with reflective fill.
fn sample(img: &Image, c: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let get = |yy: isize, xx: isize| img.at(c, reflect(yy, img.height), reflect(xx, img.width));
    let top = get(y0, x0) * (1.0 - fx) + get(y0, x0 + 1) * fx;
    let bottom = get(y0 + 1, x0) * (1.0 - fx) + get(y0 + 1, x0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples through an inverse map from output to source coordinates.
fn warp(img: &Image, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let mut out = img.clone();
    for c in 0..img.channels {
        for y in 0..img.height {
            for x in 0..img.width {
                let (sy, sx) = inverse(y as f64, x as f64);
                *out.at_mut(c, y, x) = sample(img, c, sy, sx);
            }
        }
    }
    out
}

/// Applies one operator; outputs stay in `[0, 1]` for inputs in `[0, 1]`.
pub fn apply(img: &Image, op: OpParams) -> Image {
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let mut out = match op {
        OpParams::Rotate { degrees } if degrees == 0.0 => img.clone(),
        OpParams::Rotate { degrees } => {
            let (s, co) = degrees.to_radians().sin_cos();
            warp(img, |y, x| {
                let (dy, dx) = (y - cy, x - cx);
                (cy + co * dy - s * dx, cx + s * dy + co * dx)
            })
        }
        OpParams::Translate { dx, dy } if dx == 0.0 && dy == 0.0 => img.clone(),
        OpParams::Translate { dx, dy } => warp(img, |y, x| (y - dy, x - dx)),
        OpParams::Shear { factor } if factor == 0.0 => img.clone(),
        OpParams::Shear { factor } => warp(img, |y, x| (y, x - factor * (y - cy))),
        OpParams::HorizontalFlip => {
            let mut out = img.clone();
            for c in 0..img.channels {
                for y in 0..img.height {
                    for x in 0..img.width {
                        *out.at_mut(c, y, x) = img.at(c, y, img.width - 1 - x);
                    }
                }
            }
            out
        }
        OpParams::Contrast { factor } => {
            let mean = img.pixels.iter().sum::<f64>() / img.len().max(1) as f64;
            let mut out = img.clone();
            out.pixels.iter_mut().for_each(|p| *p = mean + factor * (*p - mean));
            out
        }
        OpParams::Brightness { factor } => {
            let mut out = img.clone();
            out.pixels.iter_mut().for_each(|p| *p *= factor);
            out
        }
        OpParams::Posterize { bits } if bits >= 8 => img.clone(),
        OpParams::Posterize { bits } => {
            let drop = 8 - bits;
            let mut out = img.clone();
            out.pixels.iter_mut().for_each(|p| {
                let byte = (p.clamp(0.0, 1.0) * 255.0).round() as u32;
                *p = f64::from((byte >> drop) << drop) / 255.0;
            });
            out
        }
    };
    out.clamp_unit();
    out
}
