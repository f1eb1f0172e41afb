//! Spikiness and error metrics over relevance maps.

use std::fmt;
use std::str::FromStr;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::filters::{r_max, FilterPlan};
use crate::lrp::{explain, LrpRule};
use crate::nn::Model;
use crate::tensor::Tensor;

fn check_non_negative(x: &[f32]) -> Result<()> {
    match x.iter().find(|v| v.is_nan() || **v < 0.0) {
        Some(v) => Err(Error::arg(format!("strength needs non-negative values, found {v}"))),
        None => Ok(()),
    }
}

fn mean_where(x: &[f32], keep: impl Fn(f64) -> bool) -> Option<f64> {
    let (sum, n) = x
        .iter()
        .map(|&v| v as f64)
        .filter(|&v| keep(v))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean of the values `≥ t`; `None` when there are none.
pub fn upper_strength(x: &[f32], t: f64) -> Result<Option<f64>> {
    check_non_negative(x)?;
    Ok(mean_where(x, |v| v >= t))
}

/// Mean of the values `< t`; `None` when there are none.
pub fn lower_strength(x: &[f32], t: f64) -> Result<Option<f64>> {
    check_non_negative(x)?;
    Ok(mean_where(x, |v| v < t))
}

/// How the Mean Power threshold is chosen for each signal part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TPolicy {
    /// `t = f · max` of the part being measured.
    Relative(f64),
    Absolute(f64),
}

impl Default for TPolicy {
    fn default() -> Self {
        TPolicy::Relative(0.1)
    }
}

impl TPolicy {
    pub fn resolve(&self, part_max: f64) -> f64 {
        match *self {
            TPolicy::Relative(f) => f * part_max,
            TPolicy::Absolute(t) => t,
        }
    }
}

impl fmt::Display for TPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TPolicy::Relative(v) => write!(f, "rel:{v}"),
            TPolicy::Absolute(v) => write!(f, "abs:{v}"),
        }
    }
}

impl FromStr for TPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, v) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::config(format!("t-policy must be 'rel:<f>' or 'abs:<t>', got '{s}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad t-policy value in '{s}'")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::config(format!("t-policy value must be finite and non-negative, got {v}")));
        }
        match kind {
            "rel" => Ok(TPolicy::Relative(v)),
            "abs" => Ok(TPolicy::Absolute(v)),
            _ => Err(Error::config(format!("unknown t-policy '{kind}'"))),
        }
    }
}

/// Mean Power of one relevance map. `None` marks an undefined value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpReport {
    pub layer: usize,
    pub t_plus: f64,
    pub t_minus: f64,
    pub mp_plus: Option<f64>,
    pub mp_minus: Option<f64>,
    pub mp: Option<f64>,
}

fn ratio(part: &[f32], t: f64) -> Option<f64> {
    let upper = mean_where(part, |v| v >= t)?;
    let lower = mean_where(part, |v| v < t)?;
    (lower > 0.0).then(|| upper / lower)
}

/// Average of the defined values, `None` if there are none.
pub(crate) fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

/// `MP⁺ = U_t(R⁺)/L_t(R⁺)`, `MP⁻` likewise on `|R⁻|`, `MP` their mean.
///
/// `R⁺` keeps the zeros left by negative pixels (and vice versa). A side is
/// undefined when either of its sets is empty or its lower strength is zero.
pub fn mean_power(r: &Tensor, layer: usize, policy: TPolicy) -> MpReport {
    let plus: Vec<f32> = r.data().iter().map(|v| v.max(0.0)).collect();
    let minus: Vec<f32> = r.data().iter().map(|v| (-v).max(0.0)).collect();
    let max = |p: &[f32]| p.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    let t_plus = policy.resolve(max(&plus));
    let t_minus = policy.resolve(max(&minus));
    let mp_plus = ratio(&plus, t_plus);
    let mp_minus = ratio(&minus, t_minus);
    MpReport {
        layer,
        t_plus,
        t_minus,
        mp_plus,
        mp_minus,
        mp: mean_defined([mp_plus, mp_minus]).0,
    }
}

/// Mean Power at one layer averaged over a batch of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerMp {
    pub layer: usize,
    pub n_samples: usize,
    pub mp_plus: Option<f64>,
    pub mp_minus: Option<f64>,
    pub mp: Option<f64>,
    pub undefined_plus: usize,
    pub undefined_minus: usize,
    pub undefined_mp: usize,
}

impl LayerMp {
    /// Component values left out of the averages.
    pub fn undefined_count(&self) -> usize {
        self.undefined_plus + self.undefined_minus
    }

    pub fn from_reports(layer: usize, reports: &[MpReport]) -> Self {
        let (mp_plus, undefined_plus) = mean_defined(reports.iter().map(|r| r.mp_plus));
        let (mp_minus, undefined_minus) = mean_defined(reports.iter().map(|r| r.mp_minus));
        let (mp, undefined_mp) = mean_defined(reports.iter().map(|r| r.mp));
        LayerMp {
            layer,
            n_samples: reports.len(),
            mp_plus,
            mp_minus,
            mp,
            undefined_plus,
            undefined_minus,
            undefined_mp,
        }
    }
}

/// The first four conv layers, or all of them if there are fewer.
pub fn default_tracked_layers(model: &Model) -> Vec<usize> {
    model.conv_layers().into_iter().take(4).collect()
}

/// Explains every sample with the identity plan and averages Mean Power at
/// the requested conv layers' relevance maps, in sample order.
pub fn mp_batch(
    model: &Model,
    samples: &[Sample],
    layers: &[usize],
    rule: LrpRule,
    policy: TPolicy,
) -> Result<Vec<LayerMp>> {
    for &k in layers {
        if k >= model.num_layers() || !model.layers[k].is_conv() {
            return Err(Error::config(format!("layer {k} of {} is not a conv layer", model.name)));
        }
    }
    let plan = FilterPlan::identity();
    let mut per_layer: Vec<Vec<MpReport>> = vec![Vec::with_capacity(samples.len()); layers.len()];
    for s in samples {
        let trace = model.forward_with_trace(&s.image)?;
        let rel = explain(model, &trace, None, rule, &plan)?;
        for (reports, &k) in per_layer.iter_mut().zip(layers) {
            reports.push(mean_power(&rel.map(k).values, k, policy));
        }
    }
    Ok(layers
        .iter()
        .zip(&per_layer)
        .map(|(&k, reports)| LayerMp::from_reports(k, reports))
        .collect())
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::dim(format!("maps differ in shape: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

/// `Σ_u |g_ref(u) − g_obs(u)|`.
pub fn sum_error(g_ref: &Tensor, g_obs: &Tensor) -> Result<f64> {
    same_shape(g_ref, g_obs)?;
    Ok(g_ref
        .data()
        .iter()
        .zip(g_obs.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum())
}

/// Mean absolute error per pixel.
pub fn mae(g_ref: &Tensor, g_obs: &Tensor) -> Result<f64> {
    let se = sum_error(g_ref, g_obs)?;
    Ok(if g_ref.is_empty() { 0.0 } else { se / g_ref.len() as f64 })
}

/// Split of the domain into small-error pixels `U_α` and large-error pixels
/// `U_δα = {u : |g_obs(u)| ≥ α·max|g_obs|}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDecomposition {
    pub alpha: f64,
    pub p_alpha: f64,
    pub size_u: usize,
    pub size_u_alpha: usize,
    pub size_u_delta_alpha: usize,
    pub se_alpha: f64,
    pub se_delta_alpha: f64,
    pub se: f64,
    pub mae: f64,
    /// `E[|g_ref|]` over the whole domain.
    pub mean_abs_g: f64,
    /// Upper cap on activations; `None` for unbounded (ReLU) networks.
    pub max_allowed: Option<f64>,
}

/// Membership of each pixel in `U_δα`. Empty for an all-zero observation.
pub fn large_error_set(g_obs: &Tensor, alpha: f64) -> Vec<bool> {
    let m = r_max(g_obs) as f64;
    let tau = alpha * m;
    g_obs
        .data()
        .iter()
        .map(|&v| m > 0.0 && (v as f64).abs() >= tau)
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

pub fn decompose_error(g_ref: &Tensor, g_obs: &Tensor, alpha: f64) -> Result<ErrorDecomposition> {
    same_shape(g_ref, g_obs)?;
    check_alpha(alpha)?;
    let large = large_error_set(g_obs, alpha);
    let (mut se_alpha, mut se_delta, mut n_delta, mut abs_g) = (0.0, 0.0, 0usize, 0.0);
    for ((&a, &b), &is_large) in g_ref.data().iter().zip(g_obs.data()).zip(&large) {
        let e = (a as f64 - b as f64).abs();
        abs_g += (a as f64).abs();
        if is_large {
            se_delta += e;
            n_delta += 1;
        } else {
            se_alpha += e;
        }
    }
    let n = g_ref.len();
    let per = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    let se = se_alpha + se_delta;
    Ok(ErrorDecomposition {
        alpha,
        p_alpha: per(n_delta as f64),
        size_u: n,
        size_u_alpha: n - n_delta,
        size_u_delta_alpha: n_delta,
        se_alpha,
        se_delta_alpha: se_delta,
        se,
        mae: per(se),
        mean_abs_g: per(abs_g),
        max_allowed: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub p_alpha: f64,
    /// `E[|g_ref|]` over the whole domain, for reporting.
    pub mean_abs_g: f64,
}

/// Bound on the error left after clamping the large pixels of `g_obs`.
///
/// `g_obs` is the raw observation; `U_δα` is taken on it and its large
/// pixels are clamped to `±α·max|g_obs|`. With `δe(u) = |g_ref(u) − clamp(u)|`
///
/// ```text
/// lhs = p_α · E[δe | U_δα]
/// rhs = p_α · (E[|g_ref| | U_δα] + α·max|g_obs|)
/// ```
///
/// which holds pixel by pixel through the triangle inequality.
pub fn check_clamp_bound(g_ref: &Tensor, g_obs: &Tensor, alpha: f64) -> Result<ClampBound> {
    same_shape(g_ref, g_obs)?;
    check_alpha(alpha)?;
    let m = r_max(g_obs) as f64;
    let level = alpha * m;
    let large = large_error_set(g_obs, alpha);
    let (mut err, mut abs_ref, mut n_delta, mut abs_all) = (0.0, 0.0, 0usize, 0.0);
    for ((&a, &o), &is_large) in g_ref.data().iter().zip(g_obs.data()).zip(&large) {
        abs_all += (a as f64).abs();
        if is_large {
            // The clamp rule evaluated in f64, so the level matches `rhs`.
            let c = level.copysign(o as f64);
            err += (a as f64 - c).abs();
            abs_ref += (a as f64).abs();
            n_delta += 1;
        }
    }
    let n = g_ref.len().max(1) as f64;
    let p_alpha = n_delta as f64 / n;
    let (lhs, rhs) = if n_delta == 0 {
        (0.0, 0.0)
    } else {
        let k = n_delta as f64;
        (p_alpha * err / k, p_alpha * (abs_ref / k + level))
    };
    Ok(ClampBound {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
        p_alpha,
        mean_abs_g: abs_all / n,
    })
}

/// `1` where the image has non-zero intensity in any channel, `H×W`.
pub fn groundtruth_mask(sample: &Sample) -> Result<Tensor> {
    let (_, h, w) = sample.image.chw("mask source")?;
    let mut mask = vec![0.0f32; h * w];
    for plane in sample.image.data().chunks(h * w) {
        for (m, &v) in mask.iter_mut().zip(plane) {
            if v > 0.0 {
                *m = 1.0;
            }
        }
    }
    Tensor::new(vec![h, w], mask)
}

/// Mean `|h(u)|` over pixels outside the mask; `0` if there are none.
pub fn masked_noise_score(h: &Tensor, mask: &Tensor) -> Result<f64> {
    same_shape(h, mask)?;
    let (sum, n) = h
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m == 0.0)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + (v as f64).abs(), n + 1));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `(1 − p)·view·linear_err + p·view·delta_intensity`.
pub fn two_term_mae_estimate(p_alpha: f64, view_scale: f64, linear_err: f64, delta_intensity: f64) -> f64 {
    (1.0 - p_alpha) * view_scale * linear_err + p_alpha * view_scale * delta_intensity
}

/// Least-squares slope of `y` against `x`; `None` with fewer than two
/// distinct `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
