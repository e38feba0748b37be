//! Exact comparison of reverse-mode gradients against forward-mode tangents
//! on tiny networks with rational weights.

use num_rational::Ratio;
use space_tta::snn::{
    backward, forward, ConvLayer, DenseLayer, Layer, LifNeuronConfig, NetworkParams, OutputGrad, ResetMode, Shape3,
    SpikeTrain,
};

type Q = Ratio<i64>;

fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

/// A parameter coordinate: (layer, is_bias, index).
type Coord = (usize, bool, usize);

/// Tiny dense simulation with tangent propagation for one coordinate.
///
/// Layers are given as (weights `[out][in]`, bias) after lowering the conv to
/// its dense equivalent; `lowered[l][o][i]` lists which raw weight index each
/// dense entry comes from, so tangents map back to the conv parameters.
struct Lowered {
    /// Per layer: for each (out, in), the raw weight index or None when padded out.
    maps: Vec<Vec<Vec<Option<usize>>>>,
    /// Per layer: for each out, the raw bias index.
    bias_maps: Vec<Vec<Option<usize>>>,
    sizes: Vec<usize>,
}

fn lower(net: &NetworkParams<Q>) -> Lowered {
    let mut maps = Vec::new();
    let mut bias_maps = Vec::new();
    let mut sizes = vec![net.layers[0].input_shape().len()];
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                let (ci, h, w, k) = (c.input.channels, c.input.height, c.input.width, c.kernel as isize);
                let r = k / 2;
                let mut m = vec![vec![None; ci * h * w]; c.out_channels * h * w];
                let mut b = vec![None; c.out_channels * h * w];
                for o in 0..c.out_channels {
                    for y in 0..h as isize {
                        for x in 0..w as isize {
                            let out = (o * h + y as usize) * w + x as usize;
                            b[out] = c.bias.as_ref().map(|_| o);
                            for i in 0..ci {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let (sy, sx) = (y + ky - r, x + kx - r);
                                        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                            continue;
                                        }
                                        let src = (i * h + sy as usize) * w + sx as usize;
                                        let raw = ((o * ci + i) * k as usize + ky as usize) * k as usize + kx as usize;
                                        m[out][src] = Some(raw);
                                    }
                                }
                            }
                        }
                    }
                }
                sizes.push(c.out_channels * h * w);
                maps.push(m);
                bias_maps.push(b);
            }
            Layer::Dense(d) => {
                let m = (0..d.outputs).map(|o| (0..d.inputs).map(|i| Some(o * d.inputs + i)).collect()).collect();
                sizes.push(d.outputs);
                maps.push(m);
                bias_maps.push((0..d.outputs).map(|o| d.bias.as_ref().map(|_| o)).collect());
            }
            Layer::Pool(_) => panic!("oracle networks have no pooling"),
        }
    }
    Lowered { maps, bias_maps, sizes }
}

struct Tangents {
    scores: Vec<Q>,
    /// `T × n` at the alignment layer
    align_spikes: Vec<Q>,
    align_potentials: Vec<Q>,
}

/// Forward simulation in `(value, tangent)` pairs w.r.t. one parameter.
fn tangent(net: &NetworkParams<Q>, low: &Lowered, input: &[Vec<Q>], cfg: &LifNeuronConfig<Q>, coord: Coord) -> Tangents {
    let th = cfg.u_th();
    let leak = cfg.leak_factor();
    let gain = cfg.input_gain();
    let nl = net.layers.len();
    let mut u: Vec<Vec<Q>> = (0..nl).map(|l| vec![q(0, 1); low.sizes[l + 1]]).collect();
    let mut du: Vec<Vec<Q>> = u.clone();
    let mut scores = vec![q(0, 1); low.sizes[nl]];
    let mut align_spikes = Vec::new();
    let mut align_potentials = Vec::new();
    for x_t in input {
        let mut x = x_t.clone();
        let mut dx = vec![q(0, 1); x.len()];
        for l in 0..nl {
            let layer = &net.layers[l];
            let n = low.sizes[l + 1];
            let mut o = vec![q(0, 1); n];
            let mut d_o = vec![q(0, 1); n];
            for j in 0..n {
                let mut cur = q(0, 1);
                let mut dcur = q(0, 1);
                for (i, raw) in low.maps[l][j].iter().enumerate() {
                    if let Some(raw) = raw {
                        let w = layer.weights()[*raw];
                        cur += w * x[i];
                        dcur += w * dx[i];
                        if coord == (l, false, *raw) {
                            dcur += x[i];
                        }
                    }
                }
                if let Some(b) = low.bias_maps[l][j] {
                    cur += layer.bias().unwrap()[b];
                    if coord == (l, true, b) {
                        dcur += q(1, 1);
                    }
                }
                let h = leak * u[l][j] + gain * cur;
                let dh = leak * du[l][j] + gain * dcur;
                let fired = h >= th;
                let g = if fired { q(1, 1) } else { q(0, 1) };
                o[j] = g;
                d_o[j] = g * dh;
                match cfg.reset_mode() {
                    ResetMode::SubtractThreshold => {
                        u[l][j] = h - th * o[j];
                        du[l][j] = dh - th * d_o[j];
                    }
                    ResetMode::ToZero => {
                        u[l][j] = (q(1, 1) - o[j]) * h;
                        du[l][j] = (q(1, 1) - o[j]) * dh - h * d_o[j];
                    }
                }
            }
            if l == net.alignment_layer {
                align_spikes.extend_from_slice(&d_o);
                align_potentials.extend_from_slice(&du[l]);
            }
            if l == nl - 1 {
                for (s, d) in scores.iter_mut().zip(&d_o) {
                    *s += *d;
                }
            }
            x = o;
            dx = d_o;
        }
    }
    Tangents { scores, align_spikes, align_potentials }
}

fn coords(net: &NetworkParams<Q>) -> Vec<Coord> {
    let mut out = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        out.extend((0..layer.weights().len()).map(|i| (l, false, i)));
        out.extend((0..layer.bias().map_or(0, <[Q]>::len)).map(|i| (l, true, i)));
    }
    out
}

fn grad_at(g: &space_tta::snn::Gradients<Q>, (l, is_bias, i): Coord) -> Q {
    if is_bias {
        g.layers[l].bias[i]
    } else {
        g.layers[l].weights[i]
    }
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(q(0, 1), |acc, (x, y)| acc + *x * *y)
}

/// Conv (1 channel, 1×2, kernel `k`) feeding a 2→2 dense output: four LIF neurons.
fn network(k: usize, conv_w: &[Q], conv_b: Q, dense_w: [Q; 4], dense_b: [Q; 2]) -> NetworkParams<Q> {
    let mut conv = ConvLayer::new(Shape3::new(1, 1, 2), 1, k, true).unwrap();
    conv.weights.copy_from_slice(conv_w);
    conv.bias = Some(vec![conv_b]);
    let mut dense = DenseLayer::new(2, 2, true);
    dense.weights.copy_from_slice(&dense_w);
    dense.bias = Some(dense_b.to_vec());
    NetworkParams::new(vec![Layer::Conv(conv), Layer::Dense(dense)], 1, 0).unwrap()
}

fn check(net: &NetworkParams<Q>, bits: &[[bool; 2]], cfg: &LifNeuronConfig<Q>, seed: &OutputGrad<Q>) -> usize {
    let steps = bits.len();
    let flat: Vec<bool> = bits.iter().flatten().copied().collect();
    let spikes = SpikeTrain::new(steps, vec![1, 1, 2], flat).unwrap();
    let rec = forward(net, &spikes, cfg).unwrap();
    let grads = backward(net, &rec.tape, seed).unwrap();
    let input: Vec<Vec<Q>> = bits.iter().map(|s| s.iter().map(|&b| if b { q(1, 1) } else { q(0, 1) }).collect()).collect();
    let low = lower(net);
    let mut nonzero = 0;
    for c in coords(net) {
        let t = tangent(net, &low, &input, cfg, c);
        let mut expected = q(0, 1);
        if let Some(s) = &seed.scores {
            expected += dot(s, &t.scores);
        }
        if let Some(s) = &seed.alignment_spikes {
            expected += dot(s, &t.align_spikes);
        }
        if let Some(s) = &seed.alignment_potentials {
            expected += dot(s, &t.align_potentials);
        }
        assert_eq!(grad_at(&grads, c), expected, "coordinate {c:?}");
        if expected != q(0, 1) {
            nonzero += 1;
        }
    }
    nonzero
}

fn cases() -> Vec<(NetworkParams<Q>, Vec<[bool; 2]>)> {
    vec![
        (
            network(1, &[q(3, 1)], q(1, 4), [q(3, 2), q(-1, 2), q(5, 4), q(7, 4)], [q(1, 2), q(1, 8)]),
            vec![[true, false], [true, true], [false, true]],
        ),
        (
            network(3, &[q(1, 2), q(5, 2), q(2, 1), q(-1, 1), q(3, 1), q(1, 1), q(1, 4), q(0, 1), q(-3, 2)], q(1, 2), [
                q(2, 1),
                q(1, 1),
                q(-1, 4),
                q(5, 2),
            ], [q(1, 4), q(3, 4)]),
            vec![[true, true], [false, true], [true, false]],
        ),
        (
            network(1, &[q(5, 2)], q(0, 1), [q(4, 1), q(-2, 1), q(1, 1), q(3, 1)], [q(0, 1), q(0, 1)]),
            vec![[true, true], [true, true]],
        ),
    ]
}

/// Compares `backward` against the forward-mode expansion over every case,
/// panicking on the first mismatch. Returns the number of nonzero gradients seen.
pub fn check_all_cases() -> usize {
    let mut nonzero = 0;
    for mode in [ResetMode::SubtractThreshold, ResetMode::ToZero] {
        for tau in [q(2, 1), q(3, 1)] {
            let cfg = LifNeuronConfig::with_options(tau, q(1, 1), q(1, 1), mode).unwrap();
            for (net, bits) in cases() {
                let steps = bits.len();
                let seeds = [
                    OutputGrad { scores: Some(vec![q(1, 1), q(-2, 3)]), ..Default::default() },
                    OutputGrad {
                        alignment_spikes: Some((0..2 * steps).map(|i| q(i as i64 - 2, 3)).collect()),
                        ..Default::default()
                    },
                    OutputGrad {
                        scores: Some(vec![q(-1, 2), q(1, 1)]),
                        alignment_spikes: Some(vec![q(1, 5); 2 * steps]),
                        alignment_potentials: Some((0..2 * steps).map(|i| q(3 - i as i64, 4)).collect()),
                    },
                ];
                for seed in &seeds {
                    nonzero += check(&net, &bits, &cfg, seed);
                }
            }
        }
    }
    nonzero
}
