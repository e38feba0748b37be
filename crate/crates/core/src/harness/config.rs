//! Line-oriented `key = value` experiment configuration.
//!
//! Keys are dotted (`adapt.eta = 0.1`), `#` starts a comment, blank lines are
//! ignored. Every key has a default, so an empty file is a valid config.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adapt::{AdaptConfig, AggregationMode, SimConfig, SimilarityScope};
use crate::augment::{AugmentPolicy, CorruptionKind, Operator};
use crate::error::{Error, Result};
use crate::snn::{ArchConfig, LifNeuronConfig, ResetMode};
use crate::trainer::{SyntheticDatasetSpec, TrainConfig};

/// Environment variable that overrides `seed`.
pub const SEED_ENV: &str = "SPACE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NoAdapt,
    Space,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub spec: SyntheticDatasetSpec,
    /// Seed of the procedural dataset, separate from the run seed.
    pub seed: u64,
    /// Dataset cache to read instead of generating; empty means generate.
    pub cache: PathBuf,
    /// Evaluate only the first `n` test samples; 0 means all.
    pub test_limit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub method: Method,
    pub model: PathBuf,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub corruption_kind: CorruptionKind,
    /// 0 evaluates clean inputs.
    pub corruption_severity: u8,
    pub adapt: AdaptConfig,
    /// Keep adapted weights across samples instead of resetting per sample.
    pub carry_state: bool,
    pub augment: AugmentPolicy,
    pub sim: SimConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Number of histogram bins over `[0, 1]` for similarity summaries.
    pub hist_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::Space,
            model: PathBuf::from("model.snnw"),
            output_dir: PathBuf::from("out"),
            data: DataConfig { spec: SyntheticDatasetSpec::default(), seed: 1, cache: PathBuf::new(), test_limit: 0 },
            corruption_kind: CorruptionKind::GaussianNoise,
            corruption_severity: 5,
            adapt: AdaptConfig::default(),
            carry_state: false,
            augment: AugmentPolicy::default(),
            sim: SimConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            hist_bins: 20,
        }
    }
}

/// Every key, in serialization order.
pub const KEYS: &[&str] = &[
    "seed",
    "method",
    "model",
    "output.dir",
    "data.seed",
    "data.cache",
    "data.test_limit",
    "data.num_classes",
    "data.height",
    "data.width",
    "data.samples_per_class",
    "data.test_fraction",
    "data.noise_floor",
    "corruption.kind",
    "corruption.severity",
    "adapt.eta",
    "adapt.num_augments",
    "adapt.aggregation",
    "adapt.scope",
    "adapt.lambda_mmd",
    "adapt.kernel_bandwidth",
    "adapt.temporal_smoothing_sigma",
    "adapt.carry_state",
    "augment.operators",
    "augment.mixture_width",
    "augment.depth_min",
    "augment.depth_max",
    "augment.strength",
    "augment.alpha",
    "sim.time_steps",
    "sim.tau_m",
    "sim.u_th",
    "sim.resistance",
    "sim.reset",
    "arch.conv_channels",
    "arch.hidden",
    "arch.bias",
    "arch.init_gain",
    "arch.output_bias",
    "train.epochs",
    "train.eta",
    "train.batch_size",
    "train.output_target_rate",
    "train.grad_clip",
    "train.homeostasis",
    "train.target_rate",
    "report.hist_bins",
];

fn method_name(m: Method) -> &'static str {
    match m {
        Method::NoAdapt => "no_adapt",
        Method::Space => "space",
    }
}

pub fn aggregation_name(a: AggregationMode) -> &'static str {
    match a {
        AggregationMode::SpikeCount => "count",
        AggregationMode::AvgMembranePotential => "amp",
        AggregationMode::SpikesThroughTime => "stt",
    }
}

pub fn scope_name(s: SimilarityScope) -> &'static str {
    match s {
        SimilarityScope::LocalChannelwise => "local",
        SimilarityScope::GlobalFlat => "global",
    }
}

fn list<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got {value:?}")),
    }
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

impl ExperimentConfig {
    /// Current value of `key`, formatted so that [`Self::set`] reads it back unchanged.
    pub fn get(&self, key: &str) -> Option<String> {
        let lif = &self.sim.lif;
        Some(match key {
            "seed" => self.seed.to_string(),
            "method" => method_name(self.method).into(),
            "model" => self.model.display().to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            "data.seed" => self.data.seed.to_string(),
            "data.cache" => self.data.cache.display().to_string(),
            "data.test_limit" => self.data.test_limit.to_string(),
            "data.num_classes" => self.data.spec.num_classes.to_string(),
            "data.height" => self.data.spec.image_size.0.to_string(),
            "data.width" => self.data.spec.image_size.1.to_string(),
            "data.samples_per_class" => self.data.spec.samples_per_class.to_string(),
            "data.test_fraction" => self.data.spec.test_fraction.to_string(),
            "data.noise_floor" => self.data.spec.noise_floor.to_string(),
            "corruption.kind" => self.corruption_kind.name().into(),
            "corruption.severity" => self.corruption_severity.to_string(),
            "adapt.eta" => self.adapt.eta.to_string(),
            "adapt.num_augments" => self.adapt.num_augments.to_string(),
            "adapt.aggregation" => aggregation_name(self.adapt.aggregation).into(),
            "adapt.scope" => scope_name(self.adapt.similarity_scope).into(),
            "adapt.lambda_mmd" => self.adapt.lambda_mmd.to_string(),
            "adapt.kernel_bandwidth" => self.adapt.kernel_bandwidth.to_string(),
            "adapt.temporal_smoothing_sigma" => self.adapt.temporal_smoothing_sigma.to_string(),
            "adapt.carry_state" => self.carry_state.to_string(),
            "augment.operators" => self.augment.operators.iter().map(|o| o.name()).collect::<Vec<_>>().join(","),
            "augment.mixture_width" => self.augment.mixture_width.to_string(),
            "augment.depth_min" => self.augment.depth_min.to_string(),
            "augment.depth_max" => self.augment.depth_max.to_string(),
            "augment.strength" => self.augment.strength.to_string(),
            "augment.alpha" => self.augment.alpha.to_string(),
            "sim.time_steps" => self.sim.time_steps.to_string(),
            "sim.tau_m" => lif.tau_m().to_string(),
            "sim.u_th" => lif.u_th().to_string(),
            "sim.resistance" => lif.resistance().to_string(),
            "sim.reset" => match lif.reset_mode() {
                ResetMode::SubtractThreshold => "subtract".into(),
                ResetMode::ToZero => "zero".into(),
            },
            "arch.conv_channels" => list(&self.arch.conv_channels),
            "arch.hidden" => list(&self.arch.hidden),
            "arch.bias" => self.arch.bias.to_string(),
            "arch.init_gain" => self.arch.init_gain.to_string(),
            "arch.output_bias" => self.arch.output_bias.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.eta" => self.train.eta.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.output_target_rate" => self.train.output_target_rate.to_string(),
            "train.grad_clip" => self.train.grad_clip.to_string(),
            "train.homeostasis" => self.train.homeostasis.to_string(),
            "train.target_rate" => self.train.target_rate.to_string(),
            "report.hist_bins" => self.hist_bins.to_string(),
            _ => return None,
        })
    }

    /// Sets `key` from its text form. Errors name the key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let lif = self.sim.lif;
        let rebuild = |tau: f64, th: f64, r: f64, mode: ResetMode| {
            LifNeuronConfig::with_options(tau, th, r, mode).map_err(|e| format!("{key}: {e}"))
        };
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "method" => {
                self.method = match v {
                    "no_adapt" | "noadapt" => Method::NoAdapt,
                    "space" => Method::Space,
                    _ => return Err(format!("{key}: expected no_adapt or space, got {v:?}")),
                }
            }
            "model" => self.model = PathBuf::from(v),
            "output.dir" => self.output_dir = PathBuf::from(v),
            "data.seed" => self.data.seed = parse_num(key, v)?,
            "data.cache" => self.data.cache = PathBuf::from(v),
            "data.test_limit" => self.data.test_limit = parse_num(key, v)?,
            "data.num_classes" => self.data.spec.num_classes = parse_num(key, v)?,
            "data.height" => self.data.spec.image_size.0 = parse_num(key, v)?,
            "data.width" => self.data.spec.image_size.1 = parse_num(key, v)?,
            "data.samples_per_class" => self.data.spec.samples_per_class = parse_num(key, v)?,
            "data.test_fraction" => self.data.spec.test_fraction = parse_num(key, v)?,
            "data.noise_floor" => self.data.spec.noise_floor = parse_num(key, v)?,
            "corruption.kind" => self.corruption_kind = CorruptionKind::from_str(v).map_err(|e| format!("{key}: {e}"))?,
            "corruption.severity" => self.corruption_severity = parse_num(key, v)?,
            "adapt.eta" => self.adapt.eta = parse_num(key, v)?,
            "adapt.num_augments" => self.adapt.num_augments = parse_num(key, v)?,
            "adapt.aggregation" => {
                self.adapt.aggregation = match v {
                    "count" => AggregationMode::SpikeCount,
                    "amp" => AggregationMode::AvgMembranePotential,
                    "stt" => AggregationMode::SpikesThroughTime,
                    _ => return Err(format!("{key}: expected count, amp or stt, got {v:?}")),
                }
            }
            "adapt.scope" => {
                self.adapt.similarity_scope = match v {
                    "local" => SimilarityScope::LocalChannelwise,
                    "global" => SimilarityScope::GlobalFlat,
                    _ => return Err(format!("{key}: expected local or global, got {v:?}")),
                }
            }
            "adapt.lambda_mmd" => self.adapt.lambda_mmd = parse_num(key, v)?,
            "adapt.kernel_bandwidth" => self.adapt.kernel_bandwidth = parse_num(key, v)?,
            "adapt.temporal_smoothing_sigma" => self.adapt.temporal_smoothing_sigma = parse_num(key, v)?,
            "adapt.carry_state" => self.carry_state = parse_bool(key, v)?,
            "augment.operators" => {
                self.augment.operators = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|name| Operator::from_name(name.trim()).ok_or_else(|| format!("{key}: unknown operator {name:?}")))
                        .collect::<std::result::Result<_, _>>()?
                }
            }
            "augment.mixture_width" => self.augment.mixture_width = parse_num(key, v)?,
            "augment.depth_min" => self.augment.depth_min = parse_num(key, v)?,
            "augment.depth_max" => self.augment.depth_max = parse_num(key, v)?,
            "augment.strength" => self.augment.strength = parse_num(key, v)?,
            "augment.alpha" => self.augment.alpha = parse_num(key, v)?,
            "sim.time_steps" => self.sim.time_steps = parse_num(key, v)?,
            "sim.tau_m" => self.sim.lif = rebuild(parse_num(key, v)?, lif.u_th(), lif.resistance(), lif.reset_mode())?,
            "sim.u_th" => self.sim.lif = rebuild(lif.tau_m(), parse_num(key, v)?, lif.resistance(), lif.reset_mode())?,
            "sim.resistance" => self.sim.lif = rebuild(lif.tau_m(), lif.u_th(), parse_num(key, v)?, lif.reset_mode())?,
            "sim.reset" => {
                let mode = match v {
                    "subtract" => ResetMode::SubtractThreshold,
                    "zero" => ResetMode::ToZero,
                    _ => return Err(format!("{key}: expected subtract or zero, got {v:?}")),
                };
                self.sim.lif = rebuild(lif.tau_m(), lif.u_th(), lif.resistance(), mode)?;
            }
            "arch.conv_channels" => self.arch.conv_channels = parse_list(key, v)?,
            "arch.hidden" => self.arch.hidden = parse_list(key, v)?,
            "arch.bias" => self.arch.bias = parse_bool(key, v)?,
            "arch.init_gain" => self.arch.init_gain = parse_num(key, v)?,
            "arch.output_bias" => self.arch.output_bias = parse_num(key, v)?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.eta" => self.train.eta = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.output_target_rate" => self.train.output_target_rate = parse_num(key, v)?,
            "train.grad_clip" => self.train.grad_clip = parse_num(key, v)?,
            "train.homeostasis" => self.train.homeostasis = parse_num(key, v)?,
            "train.target_rate" => self.train.target_rate = parse_num(key, v)?,
            "report.hist_bins" => self.hist_bins = parse_num(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Range checks that `set` cannot do key by key.
    pub fn validate(&self) -> Result<()> {
        self.data.spec.validate()?;
        self.adapt.validate()?;
        self.augment.validate()?;
        if self.corruption_severity > 5 {
            return Err(Error::Config(format!("corruption.severity must be 0..=5, got {}", self.corruption_severity)));
        }
        Ok(())
    }

    /// Keeps the input shape and class count of the architecture in step with the dataset.
    pub fn sync_arch(&mut self) {
        let (h, w) = self.data.spec.image_size;
        self.arch.input = (1, h, w);
        self.arch.num_classes = self.data.spec.num_classes;
    }

    /// Seed from [`SEED_ENV`] when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }
}

/// Parses config text on top of the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse { line: line_no, message: format!("expected key = value, got {line:?}") });
        };
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Parse { line: line_no, message: format!("duplicate key {key:?}") });
        }
        cfg.set(key, value).map_err(|message| Error::Parse { line: line_no, message })?;
    }
    cfg.sync_arch();
    Ok(cfg)
}

/// Writes every key in [`KEYS`] order.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for key in KEYS {
        let value = cfg.get(key).expect("every listed key has a value");
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}
