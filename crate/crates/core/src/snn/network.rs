//! Network parameters and the extractor/classifier split.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::layers::{ConvLayer, DenseLayer, Layer, PoolLayer, Shape3};
use crate::error::{config_err, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Stack description: `conv 3x3 + LIF → avg-pool 2x2` per entry of
/// `conv_channels`, then one `dense + LIF` per entry of `hidden`, then the
/// output layer. The dense layers form the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input: (usize, usize, usize),
    pub conv_channels: Vec<usize>,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub bias: bool,
    pub init_gain: f64,
    /// Initial bias of the output layer, which keeps every class neuron firing
    /// early in training so that each receives gradient.
    pub output_bias: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input: (1, 24, 24),
            conv_channels: vec![8, 16, 16],
            hidden: vec![32],
            num_classes: 4,
            bias: true,
            init_gain: 6.0,
            output_bias: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S> {
    pub layers: Vec<Layer<S>>,
    /// First layer of the classifier; everything before is the extractor.
    pub classifier_start: usize,
    /// Spiking extractor layer whose activity is aligned during adaptation.
    pub alignment_layer: usize,
}

impl<S: Scalar> NetworkParams<S> {
    /// Assembles and validates a network, checking the shape chain and the split.
    pub fn new(layers: Vec<Layer<S>>, classifier_start: usize, alignment_layer: usize) -> Result<Self> {
        let net = Self { layers, classifier_start, alignment_layer };
        net.validate()?;
        Ok(net)
    }

    /// Builds `arch` with seeded fan-in initialization.
    pub fn build(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        let (c, h, w) = arch.input;
        let mut shape = Shape3::new(c, h, w);
        let mut layers = Vec::new();
        for &channels in &arch.conv_channels {
            let conv = ConvLayer::new(shape, channels, 3, arch.bias)?;
            shape = conv.output();
            layers.push(Layer::Conv(conv));
            let pool = PoolLayer::new(shape, 2)?;
            shape = pool.output();
            layers.push(Layer::Pool(pool));
        }
        let classifier_start = layers.len();
        let mut width = shape.len();
        for &n in arch.hidden.iter().chain(std::iter::once(&arch.num_classes)) {
            layers.push(Layer::Dense(DenseLayer::new(width, n, arch.bias)));
            width = n;
        }
        let alignment_layer = select_alignment_layer(&layers, classifier_start)
            .ok_or_else(|| crate::Error::Config("no spiking extractor layer with spatial extent > 1".into()))?;
        for layer in &mut layers {
            layer.initialize(arch.init_gain, rng);
        }
        if let Some(b) = layers.last_mut().and_then(Layer::bias_mut) {
            b.iter_mut().for_each(|v| *v = S::of(arch.output_bias));
        }
        Self::new(layers, classifier_start, alignment_layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return config_err("network has no layers");
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (out, inp) = (pair[0].output_shape(), pair[1].input_shape());
            let compatible = out == inp || (matches!(pair[1], Layer::Dense(_)) && out.len() == inp.len());
            if !compatible {
                return config_err(format!(
                    "layer {i} produces {out:?} but layer {} expects {inp:?}",
                    i + 1
                ));
            }
        }
        if !self.layers.last().is_some_and(Layer::is_spiking) {
            return config_err("the output layer must be spiking");
        }
        if self.classifier_start == 0 || self.classifier_start >= self.layers.len() {
            return config_err(format!(
                "classifier start {} must split {} layers into two non-empty spans",
                self.classifier_start,
                self.layers.len()
            ));
        }
        if !self.extractor_span().contains(&self.alignment_layer) {
            return config_err(format!("alignment layer {} is not in the extractor", self.alignment_layer));
        }
        let align = &self.layers[self.alignment_layer];
        if !align.is_spiking() {
            return config_err(format!("alignment layer {} does not spike", self.alignment_layer));
        }
        if align.output_shape().spatial() <= 1 {
            return config_err(format!("alignment layer {} has no spatial extent", self.alignment_layer));
        }
        Ok(())
    }

    pub fn extractor_span(&self) -> Range<usize> {
        0..self.classifier_start
    }

    pub fn classifier_span(&self) -> Range<usize> {
        self.classifier_start..self.layers.len()
    }

    pub fn input_shape(&self) -> Shape3 {
        self.layers[0].input_shape()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_shape().len())
    }

    pub fn alignment_shape(&self) -> Shape3 {
        self.layers[self.alignment_layer].output_shape()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Hash of the layer layout and every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::splitmix64(self.layers.len() as u64 ^ ((self.classifier_start as u64) << 32));
        let mut mix = |v: u64| h = crate::rng::splitmix64(h ^ v);
        mix(self.alignment_layer as u64);
        for layer in &self.layers {
            let s = layer.output_shape();
            mix(s.channels as u64);
            mix(s.spatial() as u64);
            for v in layer.weights().iter().chain(layer.bias().unwrap_or(&[])) {
                mix(v.as_f64().to_bits());
            }
        }
        h
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<T: Scalar>(&self) -> NetworkParams<T> {
        let conv = |v: &[S]| v.iter().map(|x| T::of(x.as_f64())).collect::<Vec<_>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(ConvLayer {
                    input: c.input,
                    out_channels: c.out_channels,
                    kernel: c.kernel,
                    weights: conv(&c.weights),
                    bias: c.bias.as_deref().map(conv),
                }),
                Layer::Pool(p) => Layer::Pool(*p),
                Layer::Dense(d) => Layer::Dense(DenseLayer {
                    inputs: d.inputs,
                    outputs: d.outputs,
                    weights: conv(&d.weights),
                    bias: d.bias.as_deref().map(conv),
                }),
            })
            .collect();
        NetworkParams { layers, classifier_start: self.classifier_start, alignment_layer: self.alignment_layer }
    }
}

/// Deepest spiking extractor layer whose map keeps spatial support
/// (`H·W > 1`). When the last extractor map collapses to 1×1 this falls
/// back to the layer before it.
pub fn select_alignment_layer<S: Scalar>(layers: &[Layer<S>], classifier_start: usize) -> Option<usize> {
    layers[..classifier_start.min(layers.len())]
        .iter()
        .enumerate()
        .rev()
        .find(|(_, l)| l.is_spiking() && l.output_shape().spatial() > 1)
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn default_arch_layout() {
        let net = NetworkParams::<f64>::build(&ArchConfig::default(), &mut SeedTree::new(1).rng()).unwrap();
        assert_eq!(net.layers.len(), 8);
        assert_eq!(net.classifier_span(), 6..8);
        assert_eq!(net.alignment_layer, 4);
        assert_eq!(net.alignment_shape(), Shape3::new(16, 6, 6));
        assert_eq!(net.num_classes(), 4);
    }

    #[test]
    fn build_is_seeded() {
        let a = NetworkParams::<f64>::build(&ArchConfig::default(), &mut SeedTree::new(3).rng()).unwrap();
        let b = NetworkParams::<f64>::build(&ArchConfig::default(), &mut SeedTree::new(3).rng()).unwrap();
        let c = NetworkParams::<f64>::build(&ArchConfig::default(), &mut SeedTree::new(4).rng()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn one_by_one_map_falls_back_to_penultimate() {
        let conv = |c, h, w| Layer::Conv(ConvLayer::<f64>::new(Shape3::new(c, h, w), 2, 3, true).unwrap());
        let pool = |c, h, w| Layer::Pool(PoolLayer::new(Shape3::new(c, h, w), 2).unwrap());
        let layers = vec![
            conv(1, 4, 4),
            pool(2, 4, 4),
            conv(2, 2, 2),
            pool(2, 2, 2),
            conv(2, 1, 1),
            Layer::Dense(DenseLayer::new(2, 4, true)),
        ];
        assert_eq!(select_alignment_layer(&layers, 5), Some(2));
        assert!(NetworkParams::new(layers.clone(), 5, 2).is_ok());
        assert!(NetworkParams::new(layers.clone(), 5, 4).is_err());
        let flat = vec![conv(1, 1, 1), Layer::Dense(DenseLayer::new(2, 4, true))];
        assert_eq!(select_alignment_layer(&flat, 1), None);
    }

    #[test]
    fn validation_errors() {
        let net = NetworkParams::<f64>::build(&ArchConfig::default(), &mut SeedTree::new(1).rng()).unwrap();
        let mut bad = net.clone();
        bad.alignment_layer = 6;
        assert!(bad.validate().is_err());
        let mut bad = net.clone();
        bad.alignment_layer = 5;
        assert!(bad.validate().is_err(), "pool layers cannot be aligned");
        let mut bad = net.clone();
        bad.classifier_start = 8;
        assert!(bad.validate().is_err());
        let mut bad = net;
        bad.layers.swap(0, 2);
        assert!(bad.validate().is_err());
    }
}
