//! Naive reference implementations and random fixtures shared by the
//! integration tests.

#![allow(dead_code)]

pub mod grad;
pub mod mp;
pub mod oracle;
pub mod props;

use lrplab::nn::{Conv2d, Dense, Layer, Model};
use lrplab::tensor::ArgmaxIndices;
use lrplab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Largest elementwise deviation divided by the largest oracle magnitude.
pub fn normwise_rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (g, w)| m.max((*g as f64 - w).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.data()[i * k + p] as f64 * b.data()[p * n + j] as f64;
            }
        }
    }
    out
}

pub fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.data()[o] as f64;
                for c in 0..ci {
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (oy * stride + i) as isize - pad as isize;
                            let xx = (ox * stride + j) as isize - pad as isize;
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            acc += x.data()[(c * h + y as usize) * w + xx as usize] as f64
                                * k.data()[((o * ci + c) * kh + i) * kw + j] as f64;
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (vec![co, oh, ow], out)
}

/// Window maxima with their first-in-scan-order winners.
pub fn naive_maxpool(x: &Tensor, size: usize, stride: usize) -> (Vec<f32>, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let (mut vals, mut idx) = (Vec::new(), Vec::new());
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best: Option<(f32, usize)> = None;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                        let v = x.data()[i];
                        if best.is_none_or(|(b, _)| v > b) {
                            best = Some((v, i));
                        }
                    }
                }
                let (v, i) = best.unwrap();
                vals.push(v);
                idx.push(i);
            }
        }
    }
    (vals, idx)
}

/// Per-window accumulation of pooled relevance onto the winners.
pub fn naive_pool_relevance(argmax: &ArgmaxIndices, r_out: &Tensor) -> Vec<f64> {
    let n: usize = argmax.input_shape.iter().product();
    let mut out = vec![0.0; n];
    for (cell, &winner) in argmax.indices.iter().enumerate() {
        out[winner] += r_out.data()[cell] as f64;
    }
    out
}

/// The convolution as an explicit `(C_out·H'·W') × (C·H·W)` dense layer.
pub fn unroll_conv(conv: &Conv2d, input: [usize; 3]) -> Dense {
    let [ci, h, w] = input;
    let (co, kh, kw) = (conv.weight.shape()[0], conv.weight.shape()[2], conv.weight.shape()[3]);
    let (s, p) = (conv.stride, conv.pad);
    let oh = (h + 2 * p - kh) / s + 1;
    let ow = (w + 2 * p - kw) / s + 1;
    let cols = ci * h * w;
    let mut weight = vec![0.0f32; co * oh * ow * cols];
    let mut bias = vec![0.0f32; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (o * oh + oy) * ow + ox;
                bias[row] = conv.bias.data()[o];
                for c in 0..ci {
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (oy * s + i) as isize - p as isize;
                            let x = (ox * s + j) as isize - p as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let col = (c * h + y as usize) * w + x as usize;
                            weight[row * cols + col] = conv.weight.data()[((o * ci + c) * kh + i) * kw + j];
                        }
                    }
                }
            }
        }
    }
    Dense {
        weight: Tensor::new(vec![co * oh * ow, cols], weight).unwrap(),
        bias: Tensor::new(vec![co * oh * ow], bias).unwrap(),
    }
}

/// A random small network described as recipe text.
///
/// Picks between 2 and 5 parametrized layers: a few convs (optionally
/// followed by ReLU and max-pooling), then dense layers down to 10 logits.
pub fn random_recipe(rng: &mut ChaCha8Rng) -> String {
    let c = rng.random_range(1..=2usize);
    let mut side = rng.random_range(5..=8usize);
    let mut text = format!("name toy\ninput {c} {side} {side}\n");
    let n_param = rng.random_range(2..=5usize);
    let n_conv = rng.random_range(1..n_param);
    for _ in 0..n_conv {
        let out = rng.random_range(1..=4usize);
        let k = rng.random_range(1..=3usize.min(side));
        let pad = rng.random_range(0..=k / 2);
        let span = side + 2 * pad - k;
        let stride = if span >= 2 && span % 2 == 0 && rng.random_bool(0.3) { 2 } else { 1 };
        side = span / stride + 1;
        text += &format!("conv {out} {k} {stride} {pad}\n");
        if rng.random_bool(0.7) {
            text += "relu\n";
        }
        if side >= 4 && rng.random_bool(0.4) {
            let (size, st) = if rng.random_bool(0.5) { (2, 2) } else { (3, 1) };
            if (side - size) % st == 0 {
                side = (side - size) / st + 1;
                text += &format!("maxpool {size} {st}\n");
            }
        }
    }
    text += "flatten\n";
    for _ in n_conv..n_param - 1 {
        text += &format!("dense {}\nrelu\n", rng.random_range(3..=12usize));
    }
    text += "dense 10\n";
    text
}

/// Replaces every parameter with uniform noise in `[-scale, scale]`; biases
/// too unless `zero_bias`.
pub fn randomize(model: &mut Model, rng: &mut ChaCha8Rng, scale: f32, zero_bias: bool) {
    for layer in &mut model.layers {
        let (w, b) = match layer {
            Layer::Conv(c) => (&mut c.weight, &mut c.bias),
            Layer::Dense(d) => (&mut d.weight, &mut d.bias),
            _ => continue,
        };
        for v in w.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
        for v in b.data_mut() {
            *v = if zero_bias { 0.0 } else { rng.random_range(-scale..scale) };
        }
    }
}

/// Pre-activations `W x + b` of every conv and dense layer along a trace.
pub fn pre_activations(model: &Model, x: &Tensor) -> Vec<Tensor> {
    let trace = model.forward_with_trace(x).unwrap();
    model
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Layer::Conv(_) | Layer::Dense(_)))
        .map(|(k, _)| trace.inputs[k + 1].clone())
        .collect()
}
