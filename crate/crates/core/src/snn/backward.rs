//! Reverse-mode gradients through the LIF recurrence and the SGD update.

use std::ops::Range;

use super::forward::Tape;
use super::layers::{Layer, LayerGrad};
use super::lif::surrogate_gate;
use super::network::NetworkParams;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Loss gradients fed into the backward pass. Any subset may be present.
#[derive(Debug, Clone)]
pub struct OutputGrad<S> {
    /// `∂L/∂scores`, one entry per class. Applied to the output spikes at every step.
    pub scores: Option<Vec<S>>,
    /// `∂L/∂o` at the alignment layer, `T × C × H × W`.
    pub alignment_spikes: Option<Vec<S>>,
    /// `∂L/∂u` for the post-reset alignment potentials, `T × C × H × W`.
    pub alignment_potentials: Option<Vec<S>>,
}

impl<S> Default for OutputGrad<S> {
    fn default() -> Self {
        Self { scores: None, alignment_spikes: None, alignment_potentials: None }
    }
}

/// Parameter gradients, one block per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<LayerGrad<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(params: &NetworkParams<S>) -> Self {
        Self { layers: params.layers.iter().map(Layer::zero_grad).collect() }
    }

    /// `self += other`, element by element in index order.
    pub fn accumulate(&mut self, other: &Gradients<S>) -> Result<()> {
        if !self.aligned_with(other) {
            return shape_err("gradient blocks differ in layout");
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: S) {
        for g in &mut self.layers {
            g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|x| *x *= factor);
        }
    }

    /// Global L2 norm over every entry.
    pub fn norm(&self) -> f64 {
        let sq: f64 = self.layers.iter().flat_map(|g| g.weights.iter().chain(&g.bias)).map(|x| x.as_f64().powi(2)).sum();
        sq.sqrt()
    }

    /// Index of the first layer in `span` holding a NaN or infinite entry.
    pub fn first_non_finite(&self, span: Range<usize>) -> Option<usize> {
        span.into_iter().find(|&l| {
            self.layers
                .get(l)
                .is_some_and(|g| g.weights.iter().chain(&g.bias).any(|v| !v.is_finite_value()))
        })
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
            .map(|v| v.as_f64().powi(2))
            .sum()
    }

    fn aligned_with(&self, other: &Gradients<S>) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len())
    }

    fn matches(&self, params: &NetworkParams<S>) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, l)| {
                g.weights.len() == l.weights().len() && g.bias.len() == l.bias().map_or(0, <[S]>::len)
            })
    }
}

/// Backpropagates `seed` through the recorded computation.
///
/// Spikes are differentiated with [`surrogate_gate`]; the reset is part of
/// the differentiated path, so a subtract reset contributes `−u_th·∂o/∂U` to
/// the potential carried to the next step. Only layers at or below the
/// deepest seeded layer receive gradient.
pub fn backward<S: Scalar>(params: &NetworkParams<S>, tape: &Tape<S>, seed: &OutputGrad<S>) -> Result<Gradients<S>> {
    if params.fingerprint() != tape.fingerprint {
        return Err(Error::Integrity("parameters changed since the forward pass".into()));
    }
    let layers = &params.layers;
    let steps = tape.time_steps();
    let last = layers.len() - 1;
    let align = params.alignment_layer;
    let align_len = params.alignment_shape().len();

    if let Some(s) = &seed.scores {
        if s.len() != params.num_classes() {
            return shape_err(format!("score gradient has {} entries for {} classes", s.len(), params.num_classes()));
        }
    }
    for (name, g) in [("spike", &seed.alignment_spikes), ("potential", &seed.alignment_potentials)] {
        if let Some(g) = g {
            if g.len() != steps * align_len {
                return shape_err(format!(
                    "alignment {name} gradient has {} entries, expected {}",
                    g.len(),
                    steps * align_len
                ));
            }
        }
    }

    let mut grads = Gradients::zeros_like(params);
    let top = if seed.scores.is_some() {
        last
    } else if seed.alignment_spikes.is_some() || seed.alignment_potentials.is_some() {
        align
    } else {
        return Ok(grads);
    };

    let config = &tape.config;
    let leak = config.leak_factor();
    let gain = config.input_gain();
    let mut carry: Vec<Vec<S>> = layers
        .iter()
        .map(|l| if l.is_spiking() { vec![S::zero(); l.output_shape().len()] } else { Vec::new() })
        .collect();
    let mut d_out: Vec<S> = Vec::new();
    let mut d_in: Vec<S> = Vec::new();
    let mut d_current: Vec<S> = Vec::new();

    for t in (0..steps).rev() {
        d_out.clear();
        match (&seed.scores, top == last) {
            (Some(s), true) => d_out.extend_from_slice(s),
            _ => d_out.resize(layers[top].output_shape().len(), S::zero()),
        }
        for l in (0..=top).rev() {
            let layer = &layers[l];
            let in_len = layer.input_shape().len();
            d_in.clear();
            d_in.resize(in_len, S::zero());
            if !layer.is_spiking() {
                layer.propagate_back(&[], &d_out, &mut LayerGrad { weights: vec![], bias: vec![] }, Some(&mut d_in));
                std::mem::swap(&mut d_out, &mut d_in);
                continue;
            }
            let n = layer.output_shape().len();
            let step = t * n..(t + 1) * n;
            if l == align {
                if let Some(g) = &seed.alignment_spikes {
                    d_out.iter_mut().zip(&g[step.clone()]).for_each(|(d, s)| *d += *s);
                }
            }
            let pre = &tape.pre_reset[l][step.clone()];
            let pot_seed = if l == align { seed.alignment_potentials.as_ref().map(|g| &g[step]) } else { None };
            d_current.clear();
            d_current.resize(n, S::zero());
            let carry_l = &mut carry[l];
            for i in 0..n {
                let mut du = carry_l[i];
                if let Some(p) = pot_seed {
                    du += p[i];
                }
                let h = pre[i];
                let dh = d_out[i] * surrogate_gate(h, config) + du * config.reset_jacobian(h);
                carry_l[i] = leak * dh;
                d_current[i] = gain * dh;
            }
            let x = &tape.inputs[l][t * in_len..(t + 1) * in_len];
            let wants_input = l > 0;
            layer.propagate_back(x, &d_current, &mut grads.layers[l], wants_input.then_some(&mut d_in[..]));
            std::mem::swap(&mut d_out, &mut d_in);
        }
    }
    Ok(grads)
}

/// `w ← w − η·g` for every layer in `span`; other layers are copied unchanged.
///
/// Refuses the whole update if any gradient entry in `span` is non-finite.
pub fn sgd_update<S: Scalar>(
    params: &NetworkParams<S>,
    grads: &Gradients<S>,
    eta: S,
    span: Range<usize>,
) -> Result<NetworkParams<S>> {
    let mut next = params.clone();
    apply_sgd(&mut next, grads, eta, span)?;
    Ok(next)
}

/// In-place form of [`sgd_update`]. `params` is untouched on error.
pub fn apply_sgd<S: Scalar>(
    params: &mut NetworkParams<S>,
    grads: &Gradients<S>,
    eta: S,
    span: Range<usize>,
) -> Result<()> {
    if !grads.matches(params) {
        return shape_err("gradients are not aligned with the parameters");
    }
    if !(eta >= S::zero()) || !eta.is_finite_value() {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {eta:?}")));
    }
    if span.end > params.layers.len() {
        return shape_err(format!("update span {span:?} exceeds {} layers", params.layers.len()));
    }
    if let Some(layer) = grads.first_non_finite(span.clone()) {
        return Err(Error::NonFiniteGradient { layer });
    }
    for l in span {
        let g = &grads.layers[l];
        let layer = &mut params.layers[l];
        layer.weights_mut().iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= eta * *d);
        if let Some(b) = layer.bias_mut() {
            b.iter_mut().zip(&g.bias).for_each(|(w, d)| *w -= eta * *d);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::snn::forward::forward;
    use crate::snn::layers::{ConvLayer, DenseLayer, Shape3};
    use crate::snn::lif::LifNeuronConfig;
    use crate::snn::network::ArchConfig;
    use crate::snn::SpikeTrain;

    fn net_and_record() -> (NetworkParams<f64>, crate::snn::ForwardRecord<f64>) {
        use rand::Rng as _;
        let arch = ArchConfig { init_gain: 2.0, ..ArchConfig::default() };
        let net = NetworkParams::build(&arch, &mut SeedTree::new(5).rng()).unwrap();
        let mut rng = SeedTree::new(9).rng();
        let bits = (0..8 * 576).map(|_| rng.random_bool(0.4)).collect();
        let input = SpikeTrain::new(8, vec![1, 24, 24], bits).unwrap();
        let rec = forward(&net, &input, &LifNeuronConfig::default()).unwrap();
        (net, rec)
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let (net, rec) = net_and_record();
        let seed = OutputGrad { scores: Some(vec![0.0; 4]), ..Default::default() };
        let g = backward(&net, &rec.tape, &seed).unwrap();
        assert_eq!(g, Gradients::zeros_like(&net));
        let g = backward(&net, &rec.tape, &OutputGrad::default()).unwrap();
        assert_eq!(g, Gradients::zeros_like(&net));
    }

    #[test]
    fn alignment_seed_leaves_classifier_untouched() {
        let (net, rec) = net_and_record();
        let n = rec.alignment_potentials.len();
        let seed = OutputGrad { alignment_spikes: Some(vec![0.5; n]), ..Default::default() };
        let g = backward(&net, &rec.tape, &seed).unwrap();
        for l in net.classifier_span() {
            assert!(g.layers[l].weights.iter().all(|&v| v == 0.0));
        }
        assert!(g.squared_norm() > 0.0);
        let again = backward(&net, &rec.tape, &seed).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn tape_mismatch_is_an_integrity_error() {
        let (mut net, rec) = net_and_record();
        net.layers[0].weights_mut()[0] += 1.0;
        let seed = OutputGrad { scores: Some(vec![1.0; 4]), ..Default::default() };
        assert!(matches!(backward(&net, &rec.tape, &seed), Err(Error::Integrity(_))));
    }

    #[test]
    fn seed_shapes_are_checked() {
        let (net, rec) = net_and_record();
        let seed = OutputGrad { scores: Some(vec![1.0; 3]), ..Default::default() };
        assert!(backward(&net, &rec.tape, &seed).is_err());
        let seed = OutputGrad { alignment_spikes: Some(vec![1.0; 3]), ..Default::default() };
        assert!(backward(&net, &rec.tape, &seed).is_err());
    }

    fn scalar_net(w: f64) -> NetworkParams<f64> {
        let mut conv = ConvLayer::<f64>::new(Shape3::new(1, 2, 1), 1, 1, false).unwrap();
        conv.weights = vec![2.0];
        let mut d = DenseLayer::<f64>::new(2, 1, false);
        d.weights = vec![w, 0.0];
        NetworkParams::new(vec![Layer::Conv(conv), Layer::Dense(d)], 1, 0).unwrap()
    }

    #[test]
    fn sgd_arithmetic_and_span() {
        let net = scalar_net(1.0);
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].weights = vec![0.5, 0.0];
        g.layers[0].weights = vec![1.0];
        let next = sgd_update(&net, &g, 0.1, 1..2).unwrap();
        assert_eq!(next.layers[1].weights(), &[0.95, 0.0]);
        assert_eq!(next.layers[0].weights(), &[2.0]);
        let same = sgd_update(&net, &g, 0.0, 0..2).unwrap();
        assert_eq!(same, net);
    }

    #[test]
    fn sgd_refuses_non_finite() {
        let net = scalar_net(1.0);
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].weights = vec![f64::NAN, 0.0];
        let mut copy = net.clone();
        let err = apply_sgd(&mut copy, &g, 0.1, 0..2).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { layer: 1 }));
        assert_eq!(copy, net);
        // the NaN sits outside the updated span
        assert!(sgd_update(&net, &g, 0.1, 0..1).is_ok());
    }
}
