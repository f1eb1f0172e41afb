//! Layer-wise relevance propagation.
//!
//! Relevance is seeded with the chosen logit and walked back through the
//! recorded activations: `R⁽ᵏ⁾` is computed from `R⁽ᵏ⁺¹⁾`, the parameters of
//! layer `k` and its input `x⁽ᵏ⁾`, so every map has the shape of the
//! corresponding layer input. Biases absorb their share of relevance.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::{apply_filter, FilterPlan};
use crate::nn::{ActivationTrace, Conv2d, Dense, Layer, Model};
use crate::tensor::{col2im, conv2d_raw, gemm, ArgmaxIndices, ConvGeometry, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrpRule {
    /// `R_i = Σ_j x_i w_ij / (z_j + ε·sign(z_j)) · R_j`, with `sign(0) = +1`.
    Epsilon { eps: f32 },
    /// Positive and negative contributions weighted by `alpha` and `beta`.
    AlphaBeta { alpha: f32, beta: f32 },
}

impl Default for LrpRule {
    fn default() -> Self {
        LrpRule::Epsilon { eps: 1e-6 }
    }
}

impl LrpRule {
    pub fn epsilon(eps: f32) -> Result<Self> {
        if eps > 0.0 && eps.is_finite() {
            Ok(LrpRule::Epsilon { eps })
        } else {
            Err(Error::config(format!("epsilon must be positive, got {eps}")))
        }
    }

    pub fn alpha_beta(alpha: f32, beta: f32) -> Result<Self> {
        if alpha >= 1.0 && beta >= 0.0 && (alpha - beta - 1.0).abs() < 1e-6 {
            Ok(LrpRule::AlphaBeta { alpha, beta })
        } else {
            Err(Error::config(format!(
                "alpha-beta rule needs alpha - beta = 1 and alpha >= 1, got ({alpha}, {beta})"
            )))
        }
    }
}

impl fmt::Display for LrpRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrpRule::Epsilon { eps } => write!(f, "eps:{eps:e}"),
            LrpRule::AlphaBeta { alpha, beta } => write!(f, "ab:{alpha},{beta}"),
        }
    }
}

impl FromStr for LrpRule {
    type Err = Error;

    /// `eps:1e-6` or `ab:2,1`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| {
            v.trim()
                .parse::<f32>()
                .map_err(|_| Error::config(format!("bad number '{v}' in rule '{s}'")))
        };
        match s.trim().split_once(':') {
            Some(("eps", e)) => Self::epsilon(num(e)?),
            Some(("ab", rest)) => {
                let (a, b) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::config(format!("alpha-beta rule needs 'ab:<a>,<b>', got '{s}'")))?;
                Self::alpha_beta(num(a)?, num(b)?)
            }
            _ => Err(Error::config(format!("unknown LRP rule '{s}'"))),
        }
    }
}

/// `R⁽ᵏ⁾`, shaped like `x⁽ᵏ⁾`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMap {
    pub layer: usize,
    pub values: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceTrace {
    /// `R⁽ᴸ⁾ … R⁽⁰⁾`, after filtering.
    pub maps: Vec<RelevanceMap>,
    pub rule: LrpRule,
    pub plan: FilterPlan,
    pub class_index: usize,
}

impl RelevanceTrace {
    /// `R⁽ᵏ⁾`.
    pub fn map(&self, k: usize) -> &RelevanceMap {
        let top = self.maps.len() - 1;
        &self.maps[top - k]
    }

    pub fn input_relevance(&self) -> &Tensor {
        &self.maps.last().expect("trace is never empty").values
    }
}

/// The logit vector with everything but `class_index` zeroed.
pub fn seed_relevance(trace: &ActivationTrace, class_index: usize) -> Result<RelevanceMap> {
    let logits = trace.logits();
    if class_index >= logits.len() {
        return Err(Error::arg(format!(
            "class {class_index} out of range for {} logits",
            logits.len()
        )));
    }
    let mut values = Tensor::zeros(logits.shape().to_vec());
    values.data_mut()[class_index] = logits.data()[class_index];
    Ok(RelevanceMap {
        layer: trace.inputs.len() - 1,
        values,
    })
}

/// A bias-free linear map and its transpose.
enum Linear<'a> {
    Dense { out: usize, inp: usize },
    Conv(&'a ConvGeometry),
}

impl Linear<'_> {
    fn apply(&self, weight: &[f32], x: &[f32]) -> Vec<f32> {
        match self {
            Linear::Dense { out, inp } => {
                let mut z = vec![0.0; *out];
                gemm(false, false, *out, 1, *inp, weight, x, &mut z, false);
                z
            }
            Linear::Conv(g) => conv2d_raw(x, weight, None, g),
        }
    }

    fn transpose(&self, weight: &[f32], s: &[f32]) -> Vec<f32> {
        match self {
            Linear::Dense { out, inp } => {
                let mut c = vec![0.0; *inp];
                gemm(true, false, *inp, 1, *out, weight, s, &mut c, false);
                c
            }
            Linear::Conv(g) => {
                let (k, n) = (g.patch_len(), g.out_pixels());
                let mut cols = vec![0.0; k * n];
                gemm(true, false, k, n, g.c_out, weight, s, &mut cols, false);
                col2im(&cols, g)
            }
        }
    }

    /// Index of the bias feeding output `j`.
    fn bias_of(&self, j: usize) -> usize {
        match self {
            Linear::Dense { .. } => j,
            Linear::Conv(g) => j / g.out_pixels(),
        }
    }
}

fn relprop_linear(
    op: Linear<'_>,
    weight: &[f32],
    bias: &[f32],
    x: &[f32],
    r_out: &[f32],
    rule: LrpRule,
) -> Vec<f32> {
    match rule {
        LrpRule::Epsilon { eps } => {
            let z = op.apply(weight, x);
            let s: Vec<f32> = z
                .iter()
                .zip(r_out)
                .enumerate()
                .map(|(j, (&zj, &rj))| {
                    let zj = zj + bias[op.bias_of(j)];
                    let denom = zj + if zj >= 0.0 { eps } else { -eps };
                    rj / denom
                })
                .collect();
            let c = op.transpose(weight, &s);
            x.iter().zip(c).map(|(&xi, ci)| xi * ci).collect()
        }
        LrpRule::AlphaBeta { alpha, beta } => {
            let w_pos: Vec<f32> = weight.iter().map(|w| w.max(0.0)).collect();
            let w_neg: Vec<f32> = weight.iter().map(|w| w.min(0.0)).collect();
            let x_pos: Vec<f32> = x.iter().map(|v| v.max(0.0)).collect();
            let x_neg: Vec<f32> = x.iter().map(|v| v.min(0.0)).collect();
            let has_neg_input = x.iter().any(|&v| v < 0.0);
            let add = |a: Vec<f32>, b: Vec<f32>| -> Vec<f32> { a.iter().zip(b).map(|(p, q)| p + q).collect() };

            // Positive and negative parts of each pre-activation.
            let mut z_pos = op.apply(&w_pos, &x_pos);
            let mut z_neg = op.apply(&w_neg, &x_pos);
            if has_neg_input {
                z_pos = add(z_pos, op.apply(&w_neg, &x_neg));
                z_neg = add(z_neg, op.apply(&w_pos, &x_neg));
            }
            let ratio = |z: &[f32], pick: fn(f32) -> f32, scale: f32| -> Vec<f32> {
                z.iter()
                    .zip(r_out)
                    .enumerate()
                    .map(|(j, (&zj, &rj))| {
                        let zj = zj + pick(bias[op.bias_of(j)]);
                        if zj == 0.0 {
                            0.0
                        } else {
                            scale * rj / zj
                        }
                    })
                    .collect()
            };
            let s_pos = ratio(&z_pos, |b| b.max(0.0), alpha);
            let s_neg = ratio(&z_neg, |b| b.min(0.0), beta);

            let on_pos_x: Vec<f32> = op
                .transpose(&w_pos, &s_pos)
                .into_iter()
                .zip(op.transpose(&w_neg, &s_neg))
                .map(|(a, b)| a - b)
                .collect();
            let mut r: Vec<f32> = x_pos.iter().zip(on_pos_x).map(|(xi, c)| xi * c).collect();
            if has_neg_input {
                let on_neg_x = op
                    .transpose(&w_neg, &s_pos)
                    .into_iter()
                    .zip(op.transpose(&w_pos, &s_neg))
                    .map(|(a, b)| a - b);
                for ((ri, xi), c) in r.iter_mut().zip(&x_neg).zip(on_neg_x) {
                    *ri += xi * c;
                }
            }
            r
        }
    }
}

/// Relevance of a dense layer's input given the relevance of its output.
pub fn relprop_dense(r_out: &Tensor, dense: &Dense, x: &Tensor, rule: LrpRule) -> Result<Tensor> {
    let (out, inp) = (dense.out_features(), dense.in_features());
    x.expect_shape(&[inp], "dense relevance input")?;
    r_out.expect_shape(&[out], "dense relevance")?;
    let r = relprop_linear(
        Linear::Dense { out, inp },
        dense.weight.data(),
        dense.bias.data(),
        x.data(),
        r_out.data(),
        rule,
    );
    Tensor::new(x.shape().to_vec(), r)
}

/// Same contribution-ratio rule as [`relprop_dense`], over each output
/// cell's receptive field.
pub fn relprop_conv(r_out: &Tensor, conv: &Conv2d, x: &Tensor, rule: LrpRule) -> Result<Tensor> {
    let g = conv.geometry(x.shape())?;
    r_out.expect_shape(&g.output_shape(), "conv relevance")?;
    let r = relprop_linear(
        Linear::Conv(&g),
        conv.weight.data(),
        conv.bias.data(),
        x.data(),
        r_out.data(),
        rule,
    );
    Tensor::new(x.shape().to_vec(), r)
}

/// Winner-take-all: each pooled cell hands its relevance to the input that
/// won the max in the forward pass.
pub fn relprop_maxpool(r_out: &Tensor, argmax: &ArgmaxIndices) -> Result<Tensor> {
    argmax.scatter(r_out)
}

/// ReLU passes relevance through unchanged.
pub fn relprop_relu(r_out: &Tensor) -> Tensor {
    r_out.clone()
}

/// Relevance for one layer.
pub fn relprop_layer(
    layer: &Layer,
    r_out: &Tensor,
    x: &Tensor,
    argmax: Option<&ArgmaxIndices>,
    rule: LrpRule,
) -> Result<Tensor> {
    match layer {
        Layer::Conv(c) => relprop_conv(r_out, c, x, rule),
        Layer::Dense(d) => relprop_dense(r_out, d, x, rule),
        Layer::MaxPool { .. } => {
            relprop_maxpool(r_out, argmax.ok_or_else(|| Error::dim("missing pool argmax in trace"))?)
        }
        Layer::Relu => Ok(relprop_relu(r_out)),
        Layer::Flatten => r_out.clone().reshape(x.shape().to_vec()),
    }
}

/// Full explanation of one traced sample.
///
/// `class_index` defaults to the predicted class. After each `R⁽ᵏ⁾` is
/// computed the plan's filter for map `k` is applied, and the filtered map
/// is what propagates further.
pub fn explain(
    model: &Model,
    trace: &ActivationTrace,
    class_index: Option<usize>,
    rule: LrpRule,
    plan: &FilterPlan,
) -> Result<RelevanceTrace> {
    plan.validate(model)?;
    if trace.inputs.len() != model.num_layers() + 1 {
        return Err(Error::dim("trace does not belong to this model"));
    }
    let class_index = class_index.unwrap_or_else(|| trace.predicted_class());
    let top = model.num_layers();
    let mut seed = seed_relevance(trace, class_index)?;
    seed.values = apply_filter(&seed.values, &plan.get(top));
    let mut maps = Vec::with_capacity(top + 1);
    maps.push(seed);
    for k in (0..top).rev() {
        let above = &maps.last().expect("non-empty").values;
        let r = relprop_layer(
            &model.layers[k],
            above,
            &trace.inputs[k],
            trace.pool_argmax[k].as_ref(),
            rule,
        )?;
        let values = apply_filter(&r, &plan.get(k));
        maps.push(RelevanceMap { layer: k, values });
    }
    Ok(RelevanceTrace {
        maps,
        rule,
        plan: plan.clone(),
        class_index,
    })
}

/// Channel-summed input relevance scaled by its maximum magnitude into
/// `[-1, 1]`; an all-zero map stays zero.
pub fn heatmap_2d(r0: &Tensor) -> Result<Tensor> {
    let (c, h, w) = r0.chw("heatmap input")?;
    let mut sum = vec![0.0f64; h * w];
    for plane in r0.data().chunks(h * w).take(c) {
        for (s, &v) in sum.iter_mut().zip(plane) {
            *s += v as f64;
        }
    }
    let max = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let data = if max == 0.0 {
        vec![0.0; h * w]
    } else {
        sum.iter().map(|v| (v / max) as f32).collect()
    };
    Tensor::new(vec![h, w], data)
}

/// A `[-1,1]` heatmap viewed at `fraction` of its maximum intensity: values
/// clipped to `±fraction·max` and rescaled back to `[-1,1]`.
pub fn fractional_view(h: &Tensor, fraction: f32) -> Tensor {
    let level = (fraction * h.max_abs()) as f64;
    if level == 0.0 {
        return h.map(|_| 0.0);
    }
    h.map(|v| ((v as f64).clamp(-level, level) / level) as f32)
}
