//! Deterministic property drivers over random fixtures: filter laws, the
//! clamp bound and relevance conservation.

use super::*;
use lrplab::filters::{apply_filter, r_max, FilterPlan, FilterSpec};
use lrplab::lrp::{explain, LrpRule};
use lrplab::metrics::check_clamp_bound;
use lrplab::nn::{Layer, Model, Recipe};
use lrplab::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random map of 1 to 300 values spread over several magnitudes, with
/// zeros and repeated maxima mixed in.
pub fn random_map(r: &mut ChaCha8Rng) -> Tensor {
    let n = r.random_range(1..=300);
    let scale = 10f32.powi(r.random_range(-3..=3));
    let mut v: Vec<f32> = (0..n)
        .map(|_| if r.random_bool(0.2) { 0.0 } else { scale * r.random_range(-1.0f32..1.0) })
        .collect();
    if n > 1 && r.random_bool(0.3) {
        let m = v.iter().fold(0.0f32, |m, x| m.max(x.abs()));
        let i = r.random_range(0..n);
        v[i] = if r.random_bool(0.5) { m } else { -m };
    }
    Tensor::from_vec1(v).unwrap()
}

pub fn random_filter(r: &mut ChaCha8Rng) -> FilterSpec {
    let alpha = if r.random_bool(0.1) { 1.0 } else { r.random_range(0.001f32..=1.0) };
    match r.random_range(0..5) {
        0 => FilterSpec::Identity,
        1 => FilterSpec::clamp(alpha).unwrap(),
        2 => FilterSpec::fraction_pass(alpha).unwrap(),
        3 => FilterSpec::zero_kill(alpha).unwrap(),
        _ => FilterSpec::amplifier(alpha, r.random_range(0.1f32..5.0)).unwrap(),
    }
}

/// Scale equivariance; `c` must be a power of two for the exact comparison.
pub fn check_scale_equivariance(r: &Tensor, f: &FilterSpec, c: f32) -> Result<(), String> {
    let lhs = apply_filter(&r.scale(c), f);
    let rhs = apply_filter(r, f).scale(c);
    if lhs == rhs {
        Ok(())
    } else {
        Err(format!("{f} not equivariant under scale {c}"))
    }
}

/// Equivariance under an arbitrary `c > 0`, ignoring pixels whose magnitude
/// sits within f32 round-off of the threshold.
pub fn check_scale_equivariance_approx(r: &Tensor, f: &FilterSpec, c: f32) -> Result<(), String> {
    let lhs = apply_filter(&r.scale(c), f);
    let rhs = apply_filter(r, f).scale(c);
    let m = r_max(r) as f64;
    let tau = f.alpha().unwrap_or(0.0) as f64 * m;
    for ((&a, &b), &x) in lhs.data().iter().zip(rhs.data()).zip(r.data()) {
        if ((x.abs() as f64) - tau).abs() <= 1e-5 * m {
            continue;
        }
        if (a as f64 - b as f64).abs() > 1e-6 * c as f64 * m {
            return Err(format!("{f} under scale {c}: {a} vs {b}"));
        }
    }
    Ok(())
}

pub fn check_sign_preservation(r: &Tensor, f: &FilterSpec) -> Result<(), String> {
    let out = apply_filter(r, f);
    for (&o, &x) in out.data().iter().zip(r.data()) {
        if o != 0.0 && (x == 0.0 || o.signum() != x.signum()) {
            return Err(format!("{f} flipped {x} to {o}"));
        }
    }
    Ok(())
}

/// Applying the clamp rule twice with one fixed threshold equals applying
/// it once.
pub fn check_clamp_idempotence(r: &Tensor, alpha: f32) -> Result<(), String> {
    let f = FilterSpec::clamp(alpha).unwrap();
    let m = r_max(r);
    let once = f.apply_with_reference(r, m);
    if f.apply_with_reference(&once, m) == once {
        Ok(())
    } else {
        Err(format!("clamp:{alpha} not idempotent at fixed threshold"))
    }
}

/// Pass output support lies inside the input support. A second pass with the
/// same fixed threshold changes nothing; a second pass with its own, smaller
/// maximum only zeroes further pixels.
pub fn check_pass_support(r: &Tensor, alpha: f32) -> Result<(), String> {
    let f = FilterSpec::fraction_pass(alpha).unwrap();
    let once = apply_filter(r, &f);
    let twice = apply_filter(&once, &f);
    for ((&x, &a), &b) in r.data().iter().zip(once.data()).zip(twice.data()) {
        if (a != 0.0 && a != x) || (b != 0.0 && b != a) {
            return Err(format!("pass:{alpha} support grew or altered a pixel ({x} -> {a} -> {b})"));
        }
    }
    if f.apply_with_reference(&once, r_max(r)) != once {
        return Err(format!("pass:{alpha} not idempotent at fixed threshold"));
    }
    Ok(())
}

/// Clamp never grows a pixel; an amplifier with gain above one never
/// shrinks one.
pub fn check_magnitude_direction(r: &Tensor, alpha: f32, gain: f32) -> Result<(), String> {
    let c = apply_filter(r, &FilterSpec::clamp(alpha).unwrap());
    let a = apply_filter(r, &FilterSpec::amplifier(alpha, gain).unwrap());
    for ((&x, &cv), &av) in r.data().iter().zip(c.data()).zip(a.data()) {
        if cv.abs() > x.abs() {
            return Err(format!("clamp:{alpha} grew {x} to {cv}"));
        }
        if gain > 1.0 && av.abs() < x.abs() {
            return Err(format!("amp:{alpha}x{gain} shrank {x} to {av}"));
        }
    }
    Ok(())
}

pub fn check_zero_fixed_point(n: usize, f: &FilterSpec) -> Result<(), String> {
    let z = Tensor::zeros(vec![n]);
    if apply_filter(&z, f) == z {
        Ok(())
    } else {
        Err(format!("{f} moved the zero map"))
    }
}

/// Counts of maps checked per filter law, plus every violation found.
#[derive(Debug, Default)]
pub struct FilterLaws {
    pub maps: usize,
    pub failures: Vec<String>,
}

/// Every filter law on `n` random maps drawn from `seed`.
pub fn filter_laws(seed: u64, n: usize) -> FilterLaws {
    let mut r = rng(seed);
    let mut out = FilterLaws::default();
    for _ in 0..n {
        let map = random_map(&mut r);
        let f = random_filter(&mut r);
        let alpha = r.random_range(0.001f32..=1.0);
        let gain = r.random_range(1.0f32..5.0);
        let c = 2f32.powi(r.random_range(-10..=10));
        let c_any = r.random_range(0.01f32..100.0);
        let results = [
            check_scale_equivariance(&map, &f, c),
            check_scale_equivariance_approx(&map, &f, c_any),
            check_sign_preservation(&map, &f),
            check_clamp_idempotence(&map, alpha),
            check_pass_support(&map, alpha),
            check_magnitude_direction(&map, alpha, gain),
            check_zero_fixed_point(map.len(), &f),
        ];
        out.failures.extend(results.into_iter().filter_map(|r| r.err()));
        out.maps += 1;
    }
    out
}

/// A reference map and an observation made of the reference, mild noise and a
/// few large spikes, on a `side × side` grid.
pub fn spiked_pair(r: &mut ChaCha8Rng, side: usize) -> (Tensor, Tensor) {
    let shape = [side, side];
    let g_ref = uniform(r, &shape, -1.0, 1.0);
    let mut g_obs = g_ref.clone();
    let noise = r.random_range(0.0f32..0.2);
    for v in g_obs.data_mut() {
        if noise > 0.0 {
            *v += r.random_range(-noise..=noise);
        }
    }
    let spikes = r.random_range(1..=(side * side / 10).max(1));
    for _ in 0..spikes {
        let i = r.random_range(0..side * side);
        let mag = r.random_range(2.0f32..50.0);
        g_obs.data_mut()[i] += if r.random_bool(0.5) { mag } else { -mag };
    }
    (g_ref, g_obs)
}

#[derive(Debug, Default)]
pub struct ClampBoundRun {
    pub cases: usize,
    pub failures: Vec<String>,
}

/// `n` spiked pairs per side length, each with a random `α`.
pub fn clamp_bound_cases(seed: u64, sides: &[usize], n: usize) -> ClampBoundRun {
    let mut r = rng(seed);
    let mut out = ClampBoundRun::default();
    for &side in sides {
        for i in 0..n {
            let (g_ref, g_obs) = spiked_pair(&mut r, side);
            let alpha = r.random_range(0.001f64..=1.0);
            let b = check_clamp_bound(&g_ref, &g_obs, alpha).unwrap();
            if !b.holds {
                out.failures.push(format!("{side}x{side} case {i}, alpha {alpha}: {} > {}", b.lhs, b.rhs));
            }
            out.cases += 1;
        }
    }
    out
}

pub const CONSERVATION_EPS: f32 = 1e-9;
pub const CONSERVATION_MIN_Z: f32 = 1e-3;
pub const CONSERVATION_TOL: f64 = 1e-3;

/// A random zero-bias network whose pre-activations all clear
/// `CONSERVATION_MIN_Z`, with a positive input.
pub fn conserving_fixture(seed: u64) -> (Model, Tensor) {
    let mut r = rng(seed);
    loop {
        let recipe = Recipe::parse(&random_recipe(&mut r)).unwrap();
        let mut model = Model::from_recipe(&recipe, seed).unwrap();
        randomize(&mut model, &mut r, 1.0, true);
        let x = uniform(&mut r, &recipe.input_shape, 0.05, 1.0);
        let clear = pre_activations(&model, &x)
            .iter()
            .all(|z| z.data().iter().all(|v| v.abs() > CONSERVATION_MIN_Z));
        if clear {
            return (model, x);
        }
    }
}

pub fn parametrized_depth(model: &Model) -> usize {
    model.layers.iter().filter(|l| matches!(l, Layer::Conv(_) | Layer::Dense(_))).count()
}

/// Largest `|ΣR⁽ᵏ⁾ − ΣR⁽ᴸ⁾| / |ΣR⁽ᴸ⁾|` over all layers.
pub fn conservation_error(model: &Model, x: &Tensor) -> f64 {
    let trace = model.forward_with_trace(x).unwrap();
    let rule = LrpRule::Epsilon { eps: CONSERVATION_EPS };
    let rel = explain(model, &trace, None, rule, &FilterPlan::identity()).unwrap();
    let top = rel.map(model.num_layers()).values.sum();
    (0..model.num_layers())
        .map(|k| (rel.map(k).values.sum() - top).abs() / top.abs())
        .fold(0.0, f64::max)
}
