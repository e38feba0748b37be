//! Procedural shape dataset and its binary cache.
//!
//! Cache layout (little-endian):
//!
//! ```text
//! "SNND"            4 bytes
//! version           u32
//! num_classes       u32
//! channels, height, width   u32 × 3
//! train count       u32
//! test count        u32
//! per image (train first, then test):
//!   label           u8
//!   pixels          f32 × channels·height·width
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::image::Image;
use crate::rng::{Rng, SeedTree};

pub const CACHE_MAGIC: &[u8; 4] = b"SNND";
pub const CACHE_VERSION: u32 = 1;

/// Shape families, in label order.
pub const CLASS_NAMES: [&str; 4] = ["hbar", "vbar", "cross", "disk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub num_classes: usize,
    pub image_size: (usize, usize),
    /// Images per class across both splits.
    pub samples_per_class: usize,
    /// Share of each class held out for testing.
    pub test_fraction: f64,
    /// Background pixels are drawn from `U(0, noise_floor)`.
    pub noise_floor: f64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self { num_classes: 4, image_size: (24, 24), samples_per_class: 300, test_fraction: 1.0 / 6.0, noise_floor: 0.05 }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > CLASS_NAMES.len() {
            return config_err(format!("num_classes must be in 1..={}", CLASS_NAMES.len()));
        }
        if self.samples_per_class < 2 {
            return config_err(format!("samples_per_class must be >= 2, got {}", self.samples_per_class));
        }
        let (h, w) = self.image_size;
        if h < 8 || w < 8 {
            return config_err("images must be at least 8x8");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return config_err("test_fraction must be in (0, 1)");
        }
        if !(0.0..=0.5).contains(&self.noise_floor) {
            return config_err("noise_floor must be in [0, 0.5]");
        }
        Ok(())
    }

    /// `(train, test)` images per class.
    pub fn split_sizes(&self) -> (usize, usize) {
        let test = ((self.samples_per_class as f64 * self.test_fraction).round() as usize).clamp(1, self.samples_per_class - 1);
        (self.samples_per_class - test, test)
    }
}

/// Labeled images with class-interleaved order: sample `i` has label `i % num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` samples, which stay class-balanced when `n` is a multiple of the class count.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset { images: self.images[..n].to_vec(), labels: self.labels[..n].to_vec(), num_classes: self.num_classes }
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        self.labels.iter().for_each(|&l| h[l] += 1);
        h
    }
}

fn draw_shape(label: usize, h: usize, w: usize, noise_floor: f64, rng: &mut Rng) -> Image {
    let mut img = Image::filled(1, h, w, 0.0);
    for p in &mut img.pixels {
        *p = if noise_floor > 0.0 { rng.random_range(0.0..noise_floor) } else { 0.0 };
    }
    let (hf, wf) = (h as f64, w as f64);
    let cy = (hf - 1.0) / 2.0 + rng.random_range(-0.12..0.12) * hf;
    let cx = (wf - 1.0) / 2.0 + rng.random_range(-0.12..0.12) * wf;
    let intensity = rng.random_range(0.6..1.0);
    let half_len = rng.random_range(0.28..0.42) * hf.min(wf);
    let half_thick = rng.random_range(0.05..0.09) * hf.min(wf);
    let radius = rng.random_range(0.16..0.28) * hf.min(wf);
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let hbar = dy.abs() <= half_thick && dx.abs() <= half_len;
            let vbar = dx.abs() <= half_thick && dy.abs() <= half_len;
            let on = match label {
                0 => hbar,
                1 => vbar,
                2 => hbar || vbar,
                _ => dy * dy + dx * dx <= radius * radius,
            };
            if on {
                *img.at_mut(0, y, x) = intensity;
            }
        }
    }
    img
}

fn generate(spec: &SyntheticDatasetSpec, per_class: usize, seeds: &SeedTree) -> Dataset {
    let (h, w) = spec.image_size;
    let n = per_class * spec.num_classes;
    let labels: Vec<usize> = (0..n).map(|i| i % spec.num_classes).collect();
    let images = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| draw_shape(label, h, w, spec.noise_floor, &mut seeds.index(i as u64).rng()))
        .collect();
    Dataset { images, labels, num_classes: spec.num_classes }
}

/// Deterministic `(train, test)` split. The two splits come from separate
/// random streams, so no test image is a copy of a training image.
pub fn synth_dataset(spec: &SyntheticDatasetSpec, seeds: &SeedTree) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let (train, test) = spec.split_sizes();
    Ok((generate(spec, train, &seeds.child("train")), generate(spec, test, &seeds.child("test"))))
}

fn bad<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Format { what: "dataset cache", message: message.into() })
}

pub fn write_dataset_cache<W: Write>(train: &Dataset, test: &Dataset, mut out: W) -> Result<()> {
    let first = train.images.first().or(test.images.first());
    let (c, h, w) = first.map_or((1, 0, 0), |i| (i.channels, i.height, i.width));
    out.write_all(CACHE_MAGIC)?;
    for v in [CACHE_VERSION as usize, train.num_classes, c, h, w, train.len(), test.len()] {
        let v = u32::try_from(v).or_else(|_| bad(format!("{v} does not fit in u32")))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for set in [train, test] {
        for (img, &label) in set.images.iter().zip(&set.labels) {
            if !(img.channels == c && img.height == h && img.width == w) {
                return bad("images differ in shape");
            }
            out.write_all(&[u8::try_from(label).or_else(|_| bad("label exceeds 255"))?])?;
            let bytes: Vec<u8> = img.pixels.iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn read_dataset_cache<R: Read>(mut input: R) -> Result<(Dataset, Dataset)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return bad("bad magic");
    }
    let mut header = [0usize; 7 - 1];
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CACHE_VERSION {
        return bad(format!("unsupported version {version}"));
    }
    for slot in &mut header {
        input.read_exact(&mut word)?;
        *slot = u32::from_le_bytes(word) as usize;
    }
    let [num_classes, c, h, w, n_train, n_test] = header;
    let mut read_set = |n: usize| -> Result<Dataset> {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut buf = vec![0u8; c * h * w * 4];
        for _ in 0..n {
            let mut label = [0u8; 1];
            input.read_exact(&mut label)?;
            if usize::from(label[0]) >= num_classes {
                return bad(format!("label {} out of range", label[0]));
            }
            input.read_exact(&mut buf)?;
            let pixels = buf.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
            images.push(Image::new(c, h, w, pixels)?);
            labels.push(usize::from(label[0]));
        }
        Ok(Dataset { images, labels, num_classes })
    };
    let train = read_set(n_train)?;
    let test = read_set(n_test)?;
    Ok((train, test))
}

pub fn save_dataset_cache(train: &Dataset, test: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset_cache(train, test, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_dataset_cache(path: &Path) -> Result<(Dataset, Dataset)> {
    read_dataset_cache(BufReader::new(File::open(path)?))
}
