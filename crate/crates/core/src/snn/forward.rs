//! Forward simulation over T steps with a tape for reverse-mode gradients.

use super::layers::Layer;
use super::lif::LifNeuronConfig;
use super::network::NetworkParams;
use super::spikes::SpikeTrain;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Everything the backward pass needs: per-layer inputs and pre-reset
/// potentials at every step, plus the input and neuron configuration so the
/// pass can be replayed.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    pub(crate) fingerprint: u64,
    pub(crate) config: LifNeuronConfig<S>,
    pub(crate) input: SpikeTrain,
    /// `T × input_len` per conv/dense layer, empty for pooling.
    pub(crate) inputs: Vec<Vec<S>>,
    /// `T × output_len` per spiking layer, empty for pooling.
    pub(crate) pre_reset: Vec<Vec<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn time_steps(&self) -> usize {
        self.input.time_steps()
    }

    pub fn input(&self) -> &SpikeTrain {
        &self.input
    }

    /// Fraction of neuron-steps that fired, per layer (0 for pooling layers).
    pub fn firing_rates(&self) -> Vec<f64> {
        let th = self.config.u_th();
        self.pre_reset
            .iter()
            .map(|h| if h.is_empty() { 0.0 } else { h.iter().filter(|&&v| v >= th).count() as f64 / h.len() as f64 })
            .collect()
    }

    /// Firing rate of each output channel of `layer` (each neuron for dense layers);
    /// empty for pooling layers.
    pub fn channel_rates(&self, layer: usize, channels: usize) -> Vec<f64> {
        let h = &self.pre_reset[layer];
        if h.is_empty() || channels == 0 {
            return Vec::new();
        }
        let th = self.config.u_th();
        let steps = self.time_steps();
        let per = h.len() / (steps * channels);
        let mut rates = vec![0.0; channels];
        for (i, v) in h.iter().enumerate() {
            if *v >= th {
                rates[(i / per) % channels] += 1.0;
            }
        }
        let denom = (steps * per) as f64;
        rates.iter_mut().for_each(|r| *r /= denom);
        rates
    }

    pub fn params_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Re-runs the recorded computation.
    pub fn replay(&self, params: &NetworkParams<S>) -> Result<ForwardRecord<S>> {
        forward(params, &self.input, &self.config)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardRecord<S> {
    /// Output-layer spike counts summed over time.
    pub prediction_scores: Vec<S>,
    pub alignment_spikes: SpikeTrain,
    /// Post-reset potentials at the alignment layer, `T × C × H × W`.
    pub alignment_potentials: Vec<S>,
    pub tape: Tape<S>,
}

impl<S: Scalar> ForwardRecord<S> {
    /// Arg-max of the spike counts, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.prediction_scores)
    }
}

pub fn argmax<S: PartialOrd + Copy>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Simulates every layer for every step of `input`, starting from zero potentials.
pub fn forward<S: Scalar>(
    params: &NetworkParams<S>,
    input: &SpikeTrain,
    config: &LifNeuronConfig<S>,
) -> Result<ForwardRecord<S>> {
    params.validate()?;
    let expected = params.input_shape();
    let shape_ok = match input.shape() {
        [c, h, w] => [*c, *h, *w] == [expected.channels, expected.height, expected.width],
        [n] => *n == expected.len(),
        _ => false,
    };
    if !shape_ok {
        return shape_err(format!("input of shape {:?} does not fit network input {expected:?}", input.shape()));
    }

    let steps = input.time_steps();
    let layers = &params.layers;
    let last = layers.len() - 1;
    let align = params.alignment_layer;
    let align_len = params.alignment_shape().len();

    let mut potentials: Vec<Vec<S>> = layers
        .iter()
        .map(|l| if l.is_spiking() { vec![S::zero(); l.output_shape().len()] } else { Vec::new() })
        .collect();
    let mut inputs: Vec<Vec<S>> = layers
        .iter()
        .map(|l| if l.is_spiking() { Vec::with_capacity(steps * l.input_shape().len()) } else { Vec::new() })
        .collect();
    let mut pre_reset: Vec<Vec<S>> = layers
        .iter()
        .map(|l| if l.is_spiking() { Vec::with_capacity(steps * l.output_shape().len()) } else { Vec::new() })
        .collect();

    let mut scores = vec![S::zero(); params.num_classes()];
    let mut align_spikes = Vec::with_capacity(steps * align_len);
    let mut align_potentials = Vec::with_capacity(steps * align_len);

    let mut activation: Vec<S> = Vec::new();
    let mut buffer: Vec<S> = Vec::new();
    let th = config.u_th();
    for t in 0..steps {
        activation.clear();
        activation.extend(input.step(t).iter().map(|&s| if s { S::one() } else { S::zero() }));
        for (l, layer) in layers.iter().enumerate() {
            buffer.clear();
            buffer.resize(layer.output_shape().len(), S::zero());
            layer.propagate(&activation, &mut buffer);
            if let Layer::Pool(_) = layer {
                std::mem::swap(&mut activation, &mut buffer);
                continue;
            }
            inputs[l].extend_from_slice(&activation);
            let u = &mut potentials[l];
            for (slot, current) in buffer.iter_mut().zip(u.iter_mut()) {
                let h = config.integrate(*current, *slot);
                pre_reset[l].push(h);
                let fired = h >= th;
                *current = if fired { config.reset(h) } else { h };
                *slot = if fired { S::one() } else { S::zero() };
            }
            if l == align {
                align_spikes.extend(buffer.iter().map(|&s| s == S::one()));
                align_potentials.extend_from_slice(u);
            }
            if l == last {
                for (score, &s) in scores.iter_mut().zip(&buffer) {
                    *score += s;
                }
            }
            std::mem::swap(&mut activation, &mut buffer);
        }
    }

    let shape = params.alignment_shape();
    Ok(ForwardRecord {
        prediction_scores: scores,
        alignment_spikes: SpikeTrain::new(steps, vec![shape.channels, shape.height, shape.width], align_spikes)?,
        alignment_potentials: align_potentials,
        tape: Tape {
            fingerprint: params.fingerprint(),
            config: *config,
            input: input.clone(),
            inputs,
            pre_reset,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::snn::layers::{DenseLayer, Shape3};
    use crate::snn::network::ArchConfig;
    use crate::snn::ConvLayer;

    fn default_net() -> NetworkParams<f64> {
        NetworkParams::build(&ArchConfig::default(), &mut SeedTree::new(11).rng()).unwrap()
    }

    fn random_input(seed: u64, steps: usize) -> SpikeTrain {
        use rand::Rng as _;
        let mut rng = SeedTree::new(seed).rng();
        let bits = (0..steps * 576).map(|_| rng.random_bool(0.3)).collect();
        SpikeTrain::new(steps, vec![1, 24, 24], bits).unwrap()
    }

    #[test]
    fn silent_input_gives_silent_network() {
        let mut net = default_net();
        for l in &mut net.layers {
            if let Some(b) = l.bias_mut() {
                b.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let input = SpikeTrain::zeros(8, vec![1, 24, 24]).unwrap();
        let rec = forward(&net, &input, &LifNeuronConfig::default()).unwrap();
        assert!(rec.prediction_scores.iter().all(|&s| s == 0.0));
        assert_eq!(rec.alignment_spikes.total(), 0);
    }

    #[test]
    fn deterministic_and_replayable() {
        let net = default_net();
        let input = random_input(2, 6);
        let cfg = LifNeuronConfig::default();
        let a = forward(&net, &input, &cfg).unwrap();
        let b = forward(&net, &input, &cfg).unwrap();
        assert_eq!(a.prediction_scores, b.prediction_scores);
        assert_eq!(a.alignment_spikes, b.alignment_spikes);
        assert_eq!(a.alignment_potentials, b.alignment_potentials);
        assert_eq!(a.tape.pre_reset, b.tape.pre_reset);
        let replay = a.tape.replay(&net).unwrap();
        assert_eq!(replay.prediction_scores, a.prediction_scores);
        assert_eq!(a.alignment_potentials.len(), 6 * 16 * 36);
    }

    #[test]
    fn hand_simulated_two_neuron_layer() {
        // One dense layer, two inputs → two LIF neurons, τ=2, θ=1, subtract reset.
        // neuron 0: w = [1.5, 0.5]; neuron 1: w = [0.25, 0.75]
        // inputs: t0 = [1,0], t1 = [1,1], t2 = [0,1]
        // n0: h0 = .75         -> no spike, u=.75
        //     h1 = .375 + 1    -> 1.375 spike, u=.375
        //     h2 = .1875 + .25 -> .4375 no spike
        // n1: h0 = .125; h1 = .0625 + .5 = .5625; h2 = .28125 + .375 = .65625, never spikes
        let d_only = dense_only(vec![1.5, 0.5, 0.25, 0.75]);
        let bits = vec![true, false, true, true, false, true];
        let input = SpikeTrain::new(3, vec![2], bits).unwrap();
        let rec = forward(&d_only, &input, &LifNeuronConfig::default()).unwrap();
        assert_eq!(rec.prediction_scores, vec![1.0, 0.0]);
        assert_eq!(rec.tape.pre_reset[1], vec![0.75, 0.125, 1.375, 0.5625, 0.4375, 0.65625]);
    }

    /// A 1×1 convolution with weight 2 relays its input spikes unchanged
    /// (h = u/2 + x with u pinned at 0), so the dense layer sees the raw input.
    fn dense_only(weights: Vec<f64>) -> NetworkParams<f64> {
        let mut conv = ConvLayer::<f64>::new(Shape3::new(1, 2, 1), 1, 1, false).unwrap();
        conv.weights = vec![2.0];
        let mut d = DenseLayer::<f64>::new(2, 2, false);
        d.weights = weights;
        NetworkParams::new(vec![Layer::Conv(conv), Layer::Dense(d)], 1, 0).unwrap()
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = default_net();
        let input = SpikeTrain::zeros(4, vec![1, 20, 24]).unwrap();
        assert!(forward(&net, &input, &LifNeuronConfig::default()).is_err());
    }
}
