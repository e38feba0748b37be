//! Parameterized layers. Convolution and dense layers drive LIF neurons;
//! average pooling is a fixed linear map between spiking layers.

use rand::Rng as _;

use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Per-step activation layout `C × H × W`. Dense activations use `N × 1 × 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn spatial(&self) -> usize {
        self.height * self.width
    }
}

/// Square convolution with stride 1 and zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    pub input: Shape3,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weights: Vec<S>,
    pub bias: Option<Vec<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    pub input: Shape3,
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weights: Vec<S>,
    pub bias: Option<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<S> {
    Conv(ConvLayer<S>),
    Pool(PoolLayer),
    Dense(DenseLayer<S>),
}

/// Gradient block matching one layer's parameters. Empty for pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> ConvLayer<S> {
    pub fn new(input: Shape3, out_channels: usize, kernel: usize, bias: bool) -> Result<Self> {
        if kernel % 2 == 0 {
            return shape_err(format!("convolution kernel must be odd, got {kernel}"));
        }
        let n = out_channels * input.channels * kernel * kernel;
        Ok(Self {
            input,
            out_channels,
            kernel,
            weights: vec![S::zero(); n],
            bias: bias.then(|| vec![S::zero(); out_channels]),
        })
    }

    pub fn output(&self) -> Shape3 {
        Shape3::new(self.out_channels, self.input.height, self.input.width)
    }

    fn fan_in(&self) -> usize {
        self.input.channels * self.kernel * self.kernel
    }

    #[inline]
    fn w_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.input.channels + ic) * self.kernel + ky) * self.kernel + kx
    }

    /// Output positions `lo..hi` along one axis of length `n` whose input
    /// `o + k − pad` is in range for kernel tap `k`.
    #[inline]
    fn tap_range(&self, k: usize, n: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        (pad.saturating_sub(k), (n + pad).saturating_sub(k).min(n))
    }

    /// Writes `W * x + b` into `out`.
    fn current(&self, x: &[S], out: &mut [S]) {
        let (h, w) = (self.input.height, self.input.width);
        let hw = h * w;
        let pad = self.kernel / 2;
        match &self.bias {
            Some(b) => {
                for (oc, &bv) in b.iter().enumerate() {
                    out[oc * hw..(oc + 1) * hw].iter_mut().for_each(|o| *o = bv);
                }
            }
            None => out.iter_mut().for_each(|o| *o = S::zero()),
        }
        for oc in 0..self.out_channels {
            let out_c = &mut out[oc * hw..(oc + 1) * hw];
            for ic in 0..self.input.channels {
                let x_c = &x[ic * hw..(ic + 1) * hw];
                for ky in 0..self.kernel {
                    let (y0, y1) = self.tap_range(ky, h);
                    for kx in 0..self.kernel {
                        let wv = self.weights[self.w_index(oc, ic, ky, kx)];
                        if wv == S::zero() {
                            continue;
                        }
                        let (x0, x1) = self.tap_range(kx, w);
                        for oy in y0..y1 {
                            let iy = oy + ky - pad;
                            let o_row = &mut out_c[oy * w + x0..oy * w + x1];
                            let i_row = &x_c[iy * w + x0 + kx - pad..iy * w + x1 + kx - pad];
                            for (o, &v) in o_row.iter_mut().zip(i_row) {
                                *o += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn backward(&self, x: &[S], d_current: &[S], grad: &mut LayerGrad<S>, d_input: Option<&mut [S]>) {
        let (h, w) = (self.input.height, self.input.width);
        let hw = h * w;
        let pad = self.kernel / 2;
        if self.bias.is_some() {
            for (oc, bg) in grad.bias.iter_mut().enumerate() {
                for &d in &d_current[oc * hw..(oc + 1) * hw] {
                    *bg += d;
                }
            }
        }
        let mut d_input = d_input;
        if let Some(di) = d_input.as_deref_mut() {
            di.iter_mut().for_each(|v| *v = S::zero());
        }
        for oc in 0..self.out_channels {
            let d_c = &d_current[oc * hw..(oc + 1) * hw];
            if d_c.iter().all(|d| *d == S::zero()) {
                continue;
            }
            for ic in 0..self.input.channels {
                let x_c = &x[ic * hw..(ic + 1) * hw];
                for ky in 0..self.kernel {
                    let (y0, y1) = self.tap_range(ky, h);
                    for kx in 0..self.kernel {
                        let wi = self.w_index(oc, ic, ky, kx);
                        let wv = self.weights[wi];
                        let (x0, x1) = self.tap_range(kx, w);
                        let mut gw = S::zero();
                        for oy in y0..y1 {
                            let iy = oy + ky - pad;
                            let d_row = &d_c[oy * w + x0..oy * w + x1];
                            let i_lo = iy * w + x0 + kx - pad;
                            let i_row = &x_c[i_lo..i_lo + (x1 - x0)];
                            for (&d, &v) in d_row.iter().zip(i_row) {
                                gw += d * v;
                            }
                            if let Some(di) = d_input.as_deref_mut() {
                                let di_row = &mut di[ic * hw + i_lo..ic * hw + i_lo + (x1 - x0)];
                                for (g, &d) in di_row.iter_mut().zip(d_row) {
                                    *g += wv * d;
                                }
                            }
                        }
                        grad.weights[wi] += gw;
                    }
                }
            }
        }
    }
}

impl PoolLayer {
    pub fn new(input: Shape3, factor: usize) -> Result<Self> {
        if factor == 0 || input.height % factor != 0 || input.width % factor != 0 {
            return shape_err(format!(
                "pooling factor {factor} does not divide {}x{}",
                input.height, input.width
            ));
        }
        Ok(Self { input, factor })
    }

    pub fn output(&self) -> Shape3 {
        Shape3::new(self.input.channels, self.input.height / self.factor, self.input.width / self.factor)
    }

    fn forward<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let o = self.output();
        let f = self.factor;
        let norm = S::one() / S::of((f * f) as f64);
        for c in 0..o.channels {
            for oy in 0..o.height {
                for ox in 0..o.width {
                    let mut acc = S::zero();
                    for dy in 0..f {
                        for dx in 0..f {
                            acc += x[(c * self.input.height + oy * f + dy) * self.input.width + ox * f + dx];
                        }
                    }
                    out[(c * o.height + oy) * o.width + ox] = acc * norm;
                }
            }
        }
    }

    fn backward<S: Scalar>(&self, d_out: &[S], d_input: &mut [S]) {
        let o = self.output();
        let f = self.factor;
        let norm = S::one() / S::of((f * f) as f64);
        for c in 0..o.channels {
            for oy in 0..o.height {
                for ox in 0..o.width {
                    let d = d_out[(c * o.height + oy) * o.width + ox] * norm;
                    for dy in 0..f {
                        for dx in 0..f {
                            d_input[(c * self.input.height + oy * f + dy) * self.input.width + ox * f + dx] = d;
                        }
                    }
                }
            }
        }
    }
}

impl<S: Scalar> DenseLayer<S> {
    pub fn new(inputs: usize, outputs: usize, bias: bool) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![S::zero(); inputs * outputs],
            bias: bias.then(|| vec![S::zero(); outputs]),
        }
    }

    fn current(&self, x: &[S], out: &mut [S]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias.as_ref().map_or(S::zero(), |b| b[o]);
            for (&wv, &xv) in row.iter().zip(x) {
                if xv != S::zero() {
                    acc += wv * xv;
                }
            }
            *slot = acc;
        }
    }

    fn backward(&self, x: &[S], d_current: &[S], grad: &mut LayerGrad<S>, d_input: Option<&mut [S]>) {
        if self.bias.is_some() {
            for (bg, &d) in grad.bias.iter_mut().zip(d_current) {
                *bg += d;
            }
        }
        for (o, &d) in d_current.iter().enumerate() {
            if d == S::zero() {
                continue;
            }
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (g, &xv) in row.iter_mut().zip(x) {
                if xv != S::zero() {
                    *g += d * xv;
                }
            }
        }
        if let Some(di) = d_input {
            di.iter_mut().for_each(|v| *v = S::zero());
            for (o, &d) in d_current.iter().enumerate() {
                if d == S::zero() {
                    continue;
                }
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (slot, &wv) in di.iter_mut().zip(row) {
                    *slot += wv * d;
                }
            }
        }
    }
}

impl<S: Scalar> Layer<S> {
    pub fn input_shape(&self) -> Shape3 {
        match self {
            Layer::Conv(c) => c.input,
            Layer::Pool(p) => p.input,
            Layer::Dense(d) => Shape3::flat(d.inputs),
        }
    }

    pub fn output_shape(&self) -> Shape3 {
        match self {
            Layer::Conv(c) => c.output(),
            Layer::Pool(p) => p.output(),
            Layer::Dense(d) => Shape3::flat(d.outputs),
        }
    }

    /// Conv and dense layers drive LIF neurons; pooling does not.
    pub fn is_spiking(&self) -> bool {
        !matches!(self, Layer::Pool(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Pool(_) => "pool",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn weights(&self) -> &[S] {
        match self {
            Layer::Conv(c) => &c.weights,
            Layer::Dense(d) => &d.weights,
            Layer::Pool(_) => &[],
        }
    }

    pub fn weights_mut(&mut self) -> &mut [S] {
        match self {
            Layer::Conv(c) => &mut c.weights,
            Layer::Dense(d) => &mut d.weights,
            Layer::Pool(_) => &mut [],
        }
    }

    pub fn bias(&self) -> Option<&[S]> {
        match self {
            Layer::Conv(c) => c.bias.as_deref(),
            Layer::Dense(d) => d.bias.as_deref(),
            Layer::Pool(_) => None,
        }
    }

    pub fn bias_mut(&mut self) -> Option<&mut [S]> {
        match self {
            Layer::Conv(c) => c.bias.as_deref_mut(),
            Layer::Dense(d) => d.bias.as_deref_mut(),
            Layer::Pool(_) => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights().len() + self.bias().map_or(0, <[S]>::len)
    }

    pub fn zero_grad(&self) -> LayerGrad<S> {
        LayerGrad {
            weights: vec![S::zero(); self.weights().len()],
            bias: vec![S::zero(); self.bias().map_or(0, <[S]>::len)],
        }
    }

    /// Fan-in scaled uniform initialization: `U(-b, b)` with `b = gain·√(6/fan_in)`.
    pub fn initialize(&mut self, gain: f64, rng: &mut Rng) {
        let fan_in = match self {
            Layer::Conv(c) => c.fan_in(),
            Layer::Dense(d) => d.inputs,
            Layer::Pool(_) => return,
        };
        let bound = gain * (6.0 / fan_in as f64).sqrt();
        for w in self.weights_mut() {
            *w = S::of(rng.random_range(-bound..bound));
        }
        if let Some(b) = self.bias_mut() {
            b.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    /// Synaptic current (conv/dense) or pooled activation (pool) for one step.
    pub(crate) fn propagate(&self, x: &[S], out: &mut [S]) {
        match self {
            Layer::Conv(c) => c.current(x, out),
            Layer::Pool(p) => p.forward(x, out),
            Layer::Dense(d) => d.current(x, out),
        }
    }

    /// Reverse of [`propagate`](Self::propagate): accumulates parameter
    /// gradients and, when requested, writes the gradient w.r.t. `x`.
    pub(crate) fn propagate_back(
        &self,
        x: &[S],
        d_out: &[S],
        grad: &mut LayerGrad<S>,
        d_input: Option<&mut [S]>,
    ) {
        match self {
            Layer::Conv(c) => c.backward(x, d_out, grad, d_input),
            Layer::Dense(d) => d.backward(x, d_out, grad, d_input),
            Layer::Pool(p) => {
                if let Some(di) = d_input {
                    p.backward(d_out, di);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct gather-form convolution.
    fn conv_reference(layer: &ConvLayer<f64>, x: &[f64]) -> Vec<f64> {
        let (h, w, k) = (layer.input.height as isize, layer.input.width as isize, layer.kernel as isize);
        let pad = k / 2;
        let mut out = vec![0.0; layer.output().len()];
        for oc in 0..layer.out_channels {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = layer.bias.as_ref().map_or(0.0, |b| b[oc]);
                    for ic in 0..layer.input.channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (oy + ky - pad, ox + kx - pad);
                                if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                    continue;
                                }
                                let wi = layer.w_index(oc, ic, ky as usize, kx as usize);
                                acc += layer.weights[wi] * x[(ic * h as usize + iy as usize) * w as usize + ix as usize];
                            }
                        }
                    }
                    out[(oc * h as usize + oy as usize) * w as usize + ox as usize] = acc;
                }
            }
        }
        out
    }

    fn sample_conv() -> (ConvLayer<f64>, Vec<f64>) {
        let mut layer = ConvLayer::new(Shape3::new(2, 4, 5), 3, 3, true).unwrap();
        for (i, w) in layer.weights.iter_mut().enumerate() {
            *w = ((i * 7 % 11) as f64 - 5.0) / 8.0;
        }
        layer.bias = Some(vec![0.25, -0.5, 0.0]);
        let x: Vec<f64> = (0..40).map(|i| ((i * 5 % 3) as f64) / 2.0).collect();
        (layer, x)
    }

    #[test]
    fn scatter_conv_matches_gather() {
        let (layer, x) = sample_conv();
        let mut out = vec![0.0; layer.output().len()];
        layer.current(&x, &mut out);
        assert_eq!(out, conv_reference(&layer, &x));
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <d, W x> = <W^T d, x> and dL/dW matches finite differences of a linear map exactly.
        let (mut layer, x) = sample_conv();
        layer.bias = None;
        let d: Vec<f64> = (0..layer.output().len()).map(|i| ((i * 3 % 7) as f64 - 3.0) / 4.0).collect();
        let mut out = vec![0.0; d.len()];
        layer.current(&x, &mut out);
        let lhs: f64 = d.iter().zip(&out).map(|(a, b)| a * b).sum();
        let mut grad = Layer::Conv(layer.clone()).zero_grad();
        let mut dx = vec![0.0; x.len()];
        layer.backward(&x, &d, &mut grad, Some(&mut dx));
        let rhs: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        // linear in W: <grad, W> equals <d, W x>
        let via_w: f64 = grad.weights.iter().zip(&layer.weights).map(|(a, b)| a * b).sum();
        assert!((lhs - via_w).abs() < 1e-12);
    }

    #[test]
    fn pool_averages_blocks() {
        let p = PoolLayer::new(Shape3::new(1, 2, 4), 2).unwrap();
        let x = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let mut out = [0.0; 2];
        p.forward(&x, &mut out);
        assert_eq!(out, [0.5, 1.0]);
        let mut dx = [0.0; 8];
        p.backward(&[4.0, 8.0], &mut dx);
        assert_eq!(dx, [1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(PoolLayer::new(Shape3::new(1, 3, 4), 2).is_err());
    }

    #[test]
    fn dense_current_and_adjoint() {
        let mut d = DenseLayer::<f64>::new(3, 2, true);
        d.weights = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        d.bias = Some(vec![0.5, -0.5]);
        let mut out = [0.0; 2];
        d.current(&[1.0, 0.0, 1.0], &mut out);
        assert_eq!(out, [4.5, -1.5]);
        let mut g = Layer::Dense(d.clone()).zero_grad();
        let mut dx = [0.0; 3];
        d.backward(&[1.0, 0.0, 1.0], &[1.0, 2.0], &mut g, Some(&mut dx));
        assert_eq!(g.weights, vec![1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        assert_eq!(g.bias, vec![1.0, 2.0]);
        assert_eq!(dx, [-1.0, 3.0, 3.0]);
    }
}
