//! Randomized sweeps of the kernels against the naive references.

use super::*;
use lrplab::lrp::{relprop_conv, relprop_dense, LrpRule};
use lrplab::tensor::{conv2d, matmul, maxpool2d};

pub const REL_TOL: f64 = 1e-5;

/// Cases run, the worst relative error seen and every case above tolerance.
#[derive(Debug, Default)]
pub struct Sweep {
    pub cases: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Sweep {
    fn record(&mut self, what: impl FnOnce() -> String, err: f64) {
        self.cases += 1;
        self.worst = self.worst.max(err);
        if err.is_nan() || err > REL_TOL {
            self.failures.push(format!("{}: {err}", what()));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn matmul_sweep(trials: u64) -> Sweep {
    let mut s = Sweep::default();
    for seed in 0..trials {
        let mut r = rng(seed);
        let (m, k, n) = (r.random_range(1..9), r.random_range(1..12), r.random_range(1..9));
        let a = uniform(&mut r, &[m, k], -1.0, 1.0);
        let b = uniform(&mut r, &[k, n], -1.0, 1.0);
        let c = matmul(&a, &b).unwrap();
        let err = if c.shape() == [m, n] { normwise_rel_err(c.data(), &naive_matmul(&a, &b)) } else { f64::INFINITY };
        s.record(|| format!("matmul seed {seed}"), err);
    }
    s
}

pub fn conv_sweep(trials: u64) -> Sweep {
    let mut s = Sweep::default();
    for seed in 0..trials {
        let mut r = rng(1000 + seed);
        let ci = r.random_range(1..4);
        let co = r.random_range(1..5);
        let (h, w) = (r.random_range(3..10), r.random_range(3..10));
        let kh = r.random_range(1..=3usize.min(h));
        let kw = r.random_range(1..=3usize.min(w));
        let pad = r.random_range(0..2);
        let stride = if (h + 2 * pad - kh) % 2 == 0 && (w + 2 * pad - kw) % 2 == 0 && r.random_bool(0.5) {
            2
        } else {
            1
        };
        let x = uniform(&mut r, &[ci, h, w], -1.0, 1.0);
        let k = uniform(&mut r, &[co, ci, kh, kw], -1.0, 1.0);
        let b = uniform(&mut r, &[co], -1.0, 1.0);
        let out = conv2d(&x, &k, &b, stride, pad).unwrap();
        let (shape, want) = naive_conv(&x, &k, &b, stride, pad);
        let err = if out.shape() == &shape[..] { normwise_rel_err(out.data(), &want) } else { f64::INFINITY };
        s.record(|| format!("conv seed {seed}"), err);
    }
    s
}

/// Max pooling is compared exactly, winners included; coarse values force ties.
pub fn maxpool_sweep(trials: u64) -> Sweep {
    let mut s = Sweep::default();
    for seed in 0..trials {
        let mut r = rng(2000 + seed);
        let c = r.random_range(1..4);
        let size = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let h = size + stride * r.random_range(0..5);
        let w = size + stride * r.random_range(0..5);
        let mut x = uniform(&mut r, &[c, h, w], -2.0, 2.0);
        for v in x.data_mut() {
            *v = (*v * 2.0).round() / 2.0;
        }
        let (out, arg) = maxpool2d(&x, size, stride).unwrap();
        let (vals, idx) = naive_maxpool(&x, size, stride);
        let err = if out.data() == &vals[..] && arg.indices == idx { 0.0 } else { f64::INFINITY };
        s.record(|| format!("maxpool seed {seed}"), err);
    }
    s
}

fn unrolled_err(seed: u64, rule: LrpRule, shape: [usize; 3], co: usize, k: usize, stride: usize, pad: usize) -> f64 {
    let mut r = rng(seed);
    let conv = Conv2d {
        weight: uniform(&mut r, &[co, shape[0], k, k], -1.0, 1.0),
        bias: uniform(&mut r, &[co], -0.1, 0.1),
        stride,
        pad,
    };
    let x = uniform(&mut r, &shape, 0.0, 1.0);
    let g = conv.geometry(&shape).unwrap();
    let r_out = uniform(&mut r, &g.output_shape(), -1.0, 1.0);
    let got = relprop_conv(&r_out, &conv, &x, rule).unwrap();

    let dense = unroll_conv(&conv, shape);
    let flat_x = x.clone().reshape(vec![x.len()]).unwrap();
    let flat_r = r_out.clone().reshape(vec![r_out.len()]).unwrap();
    let want = relprop_dense(&flat_r, &dense, &flat_x, rule).unwrap();
    let want: Vec<f64> = want.data().iter().map(|&v| v as f64).collect();
    normwise_rel_err(got.data(), &want)
}

/// Convolution relevance against the relevance of the equivalent dense
/// layer, under both rules.
pub fn unrolled_sweep(trials: u64) -> Sweep {
    let mut s = Sweep::default();
    for rule in [LrpRule::Epsilon { eps: 1e-6 }, LrpRule::AlphaBeta { alpha: 2.0, beta: 1.0 }] {
        s.record(|| format!("{rule} fixed case"), unrolled_err(1, rule, [1, 4, 4], 1, 3, 1, 0));
        for seed in 0..trials {
            let mut r = rng(4000 + seed);
            let ci = r.random_range(1..3);
            let side = r.random_range(4..8usize);
            let k = r.random_range(1..4usize);
            let pad = r.random_range(0..=k / 2);
            let stride = if (side + 2 * pad - k) % 2 == 0 { r.random_range(1..3) } else { 1 };
            let err = unrolled_err(5000 + seed, rule, [ci, side, side], r.random_range(1..4), k, stride, pad);
            s.record(|| format!("{rule} seed {seed}"), err);
        }
    }
    s
}
