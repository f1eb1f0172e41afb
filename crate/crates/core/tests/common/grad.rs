//! Central finite differences against the analytic gradients, with kink
//! exclusion.

use super::*;
use lrplab::nn::{backprop, cross_entropy, ActivationTrace, Layer, Model, Recipe};
use lrplab::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const H: f32 = 1e-3;
const REL_TOL: f64 = 1e-2;
/// Entries this small next to the instance's largest gradient are compared
/// absolutely, since f32 round-off in the loss dominates their differences.
const ABS_FLOOR: f64 = 1e-3;
const KINK: f32 = 1e-4;
pub const INSTANCES: u64 = 24;
const MAX_ENTRIES: usize = 60;

fn loss(model: &Model, x: &Tensor, label: usize) -> (f64, ActivationTrace) {
    let trace = model.forward_with_trace(x).unwrap();
    (cross_entropy(trace.logits(), label).unwrap().0, trace)
}

/// ReLU activity and pooling winners; a change means the perturbation
/// crossed a kink.
fn pattern(model: &Model, trace: &ActivationTrace) -> Vec<u64> {
    let mut out = Vec::new();
    for (k, layer) in model.layers.iter().enumerate() {
        match layer {
            Layer::Relu => out.extend(trace.inputs[k].data().iter().map(|&v| (v > 0.0) as u64)),
            Layer::MaxPool { .. } => {
                out.extend(trace.pool_argmax[k].as_ref().unwrap().indices.iter().map(|&i| i as u64))
            }
            _ => {}
        }
    }
    out
}

fn near_kink(model: &Model, trace: &ActivationTrace) -> bool {
    model.layers.iter().enumerate().any(|(k, l)| match l {
        Layer::Relu => trace.inputs[k].data().iter().any(|v| v.abs() < KINK),
        Layer::MaxPool { .. } => {
            // Runner-up within KINK of the winner.
            let arg = trace.pool_argmax[k].as_ref().unwrap();
            let x = &trace.inputs[k];
            arg.indices.iter().enumerate().any(|(cell, &win)| {
                x.data().iter().enumerate().any(|(i, &v)| {
                    i != win && same_window(arg, cell, i, l) && (x.data()[win] - v).abs() < KINK
                })
            })
        }
        _ => false,
    })
}

fn same_window(arg: &lrplab::tensor::ArgmaxIndices, cell: usize, i: usize, l: &Layer) -> bool {
    let Layer::MaxPool { size, stride } = *l else { return false };
    let [_, h, w] = arg.input_shape;
    let [_, oh, ow] = arg.output_shape;
    let (c, oy, ox) = (cell / (oh * ow), (cell / ow) % oh, cell % ow);
    let (ic, iy, ix) = (i / (h * w), (i / w) % h, i % w);
    ic == c && iy >= oy * stride && iy < oy * stride + size && ix >= ox * stride && ix < ox * stride + size
}

#[derive(Default)]
pub struct Outcome {
    pub checked: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
}

fn compare(analytic: &[f32], numeric: &[(usize, Option<f64>)], what: &str, out: &mut Outcome) {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
    for &(i, n) in numeric {
        let Some(n) = n else {
            out.skipped += 1;
            continue;
        };
        let a = analytic[i] as f64;
        let diff = (a - n).abs();
        let ok = diff <= REL_TOL * a.abs().max(n.abs()) || diff <= ABS_FLOOR * scale;
        if !ok {
            out.failures.push(format!("{what}[{i}]: analytic {a}, numeric {n}"));
        }
        out.checked += 1;
    }
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    if n <= MAX_ENTRIES {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, MAX_ENTRIES).into_vec()
    }
}

/// Numeric derivative of the loss at one coordinate, or `None` when the
/// perturbation crosses a kink.
fn numeric(
    eval: &mut dyn FnMut(f32) -> (f64, Vec<u64>),
    base_pattern: &[u64],
) -> Option<f64> {
    let (lp, pp) = eval(H);
    let (lm, pm) = eval(-H);
    (pp == base_pattern && pm == base_pattern).then(|| (lp - lm) / (2.0 * H as f64))
}

/// `distort` scales the analytic gradients, to confirm the comparison
/// notices wrong ones.
pub fn check_instance(model: &Model, x: &Tensor, label: usize, rng: &mut ChaCha8Rng, distort: f32) -> Outcome {
    let (_, trace) = loss(model, x, label);
    let base = pattern(model, &trace);
    let (_, grad_logits) = cross_entropy(trace.logits(), label).unwrap();
    let (mut grads, dx) = backprop(model, &trace, &grad_logits, true).unwrap();
    grads.scale(distort);
    let dx = dx.unwrap().scale(distort);
    let mut out = Outcome::default();

    for (p, g) in grads.tensors.iter().enumerate() {
        let entries = pick(rng, g.len());
        let num: Vec<(usize, Option<f64>)> = entries
            .iter()
            .map(|&i| {
                let mut eval = |d: f32| {
                    let mut m = model.clone();
                    m.params_mut()[p].data_mut()[i] += d;
                    let (l, t) = loss(&m, x, label);
                    (l, pattern(&m, &t))
                };
                (i, numeric(&mut eval, &base))
            })
            .collect();
        compare(g.data(), &num, &format!("param {p}"), &mut out);
    }

    let entries = pick(rng, x.len());
    let num: Vec<(usize, Option<f64>)> = entries
        .iter()
        .map(|&i| {
            let mut eval = |d: f32| {
                let mut xp = x.clone();
                xp.data_mut()[i] += d;
                let (l, t) = loss(model, &xp, label);
                (l, pattern(model, &t))
            };
            (i, numeric(&mut eval, &base))
        })
        .collect();
    compare(dx.data(), &num, "input", &mut out);
    out
}

/// Totals over one layer kind's instances.
#[derive(Debug, Default)]
pub struct Summary {
    pub instances: u64,
    pub checked: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances >= INSTANCES && self.skipped * 20 <= self.checked
    }
}

/// Runs `INSTANCES` random instances of `recipe_for`, redrawing any that sit
/// on a kink.
pub fn run(kind: &str, recipe_for: impl Fn(&mut ChaCha8Rng) -> String) -> Summary {
    let mut s = Summary::default();
    let mut attempts = 0u64;
    while s.instances < INSTANCES && attempts < 20 * INSTANCES {
        attempts += 1;
        let mut r = rng(attempts * 7919 + kind.len() as u64);
        let recipe = Recipe::parse(&recipe_for(&mut r)).unwrap();
        let mut model = Model::from_recipe(&recipe, attempts).unwrap();
        randomize(&mut model, &mut r, 0.5, false);
        let x = uniform(&mut r, &recipe.input_shape, 0.0, 1.0);
        let (_, trace) = loss(&model, &x, 0);
        if near_kink(&model, &trace) {
            continue;
        }
        let label = r.random_range(0..10);
        let o = check_instance(&model, &x, label, &mut r, 1.0);
        s.failures.extend(o.failures.into_iter().map(|f| format!("{kind} instance {attempts}: {f}")));
        s.checked += o.checked;
        s.skipped += o.skipped;
        s.instances += 1;
    }
    s
}

/// Recipe generators, one per layer kind.
pub fn dense_recipe(r: &mut ChaCha8Rng) -> String {
    format!("name d\ninput 1 3 3\nflatten\ndense {}\nrelu\ndense 10\n", r.random_range(2..8))
}

pub fn conv_recipe(r: &mut ChaCha8Rng) -> String {
    let k = r.random_range(1..4);
    let pad = r.random_range(0..=k / 2);
    let side = 5 + 2 * r.random_range(0..2usize);
    let stride = if (side + 2 * pad - k) % 2 == 0 { r.random_range(1..3) } else { 1 };
    format!(
        "name c\ninput {} {side} {side}\nconv {} {k} {stride} {pad}\nflatten\ndense 10\n",
        r.random_range(1..3),
        r.random_range(1..4)
    )
}

pub fn relu_recipe(r: &mut ChaCha8Rng) -> String {
    format!("name r\ninput 1 4 4\nconv {} 3 1 1\nrelu\nflatten\ndense 10\n", r.random_range(1..4))
}

pub fn maxpool_recipe(r: &mut ChaCha8Rng) -> String {
    let (size, stride, side) = [(2, 2, 6), (3, 2, 7), (3, 1, 5), (5, 5, 10)][r.random_range(0..4)];
    format!(
        "name p\ninput 1 {side} {side}\nconv {} 3 1 1\nmaxpool {size} {stride}\nflatten\ndense 10\n",
        r.random_range(1..3)
    )
}

pub fn flatten_recipe(r: &mut ChaCha8Rng) -> String {
    format!("name f\ninput {} 3 3\nflatten\ndense 10\n", r.random_range(1..4))
}

pub type RecipeFn = fn(&mut ChaCha8Rng) -> String;

pub const KINDS: [(&str, RecipeFn); 5] = [
    ("dense", dense_recipe),
    ("conv", conv_recipe),
    ("relu", relu_recipe),
    ("maxpool", maxpool_recipe),
    ("flatten", flatten_recipe),
];
