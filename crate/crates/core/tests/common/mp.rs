//! Mean Power fixtures.

use super::*;
use lrplab::metrics::{mean_power, MpReport, TPolicy};

/// `mp_plus` of `[1, 1, 0.1, 0.1]` at absolute `t = 0.5`, which must be
/// `1 / f32(0.1)` since 0.1 is stored as the nearest f32.
pub fn hand_fixture() -> Result<f64, String> {
    let r = Tensor::from_vec1(vec![1.0, 1.0, 0.1, 0.1]).unwrap();
    let rep = mean_power(&r, 0, TPolicy::Absolute(0.5));
    let p = rep.mp_plus.ok_or("mp_plus undefined")?;
    let exact = 1.0 / 0.1f32 as f64;
    if (p - exact).abs() > 1e-9 || (p - 10.0).abs() > 1e-6 {
        return Err(format!("mp_plus {p}"));
    }
    if rep.mp_minus.is_some() || rep.mp != rep.mp_plus {
        return Err(format!("negative side should be undefined: {rep:?}"));
    }
    Ok(p)
}

/// A map of eighths in `[-5, 5]` with no pixel near either relative threshold.
pub fn dyadic_map(r: &mut ChaCha8Rng, f: f64) -> Tensor {
    loop {
        let n = r.random_range(2..120);
        let v: Vec<f32> = (0..n).map(|_| r.random_range(-40i32..=40) as f32 / 8.0).collect();
        let pmax = v.iter().fold(0.0f32, |m, &x| m.max(x)) as f64;
        let nmax = v.iter().fold(0.0f32, |m, &x| m.max(-x)) as f64;
        let clear = v.iter().all(|&x| {
            let x = x as f64;
            (x - f * pmax).abs() > 1e-6 && (-x - f * nmax).abs() > 1e-6
        });
        if clear {
            return Tensor::from_vec1(v).unwrap();
        }
    }
}

pub fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
        (None, None) => true,
        _ => false,
    }
}

/// `b` is the report of `a`'s map scaled by `c`.
pub fn same_report(a: &MpReport, b: &MpReport, c: f64) -> bool {
    close(a.mp_plus, b.mp_plus)
        && close(a.mp_minus, b.mp_minus)
        && close(a.mp, b.mp)
        && (a.t_plus * c - b.t_plus).abs() <= 1e-9 * b.t_plus.abs().max(1.0)
        && (a.t_minus * c - b.t_minus).abs() <= 1e-9 * b.t_minus.abs().max(1.0)
}

pub const SCALES: [f32; 3] = [0.5, 3.0, 100.0];

/// Maps checked and every report that moved under scaling.
pub fn scale_invariance(seed: u64, per_fraction: usize) -> (usize, Vec<String>) {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    let mut cases = 0;
    for f in [0.1, 0.25, 0.5] {
        for _ in 0..per_fraction {
            let m = dyadic_map(&mut r, f);
            let base = mean_power(&m, 0, TPolicy::Relative(f));
            for c in SCALES {
                let scaled = mean_power(&m.scale(c), 0, TPolicy::Relative(f));
                if !same_report(&base, &scaled, c as f64) {
                    failures.push(format!("{base:?} vs {scaled:?} at {c}"));
                }
            }
            cases += 1;
        }
    }
    (cases, failures)
}
