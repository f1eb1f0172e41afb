//! Amplitude filters applied to relevance maps during backward propagation.
//!
//! Each filter splits a map into the pixels whose magnitude reaches a
//! fraction `α` of the map's own maximum magnitude and the rest, and
//! transforms only the former:
//!
//! | spec           | large pixels (`|R_i| ≥ α·R_max`) |
//! |----------------|-----------------------------------|
//! | `identity`     | unchanged                         |
//! | `clamp:α`      | `sign(R_i)·α·R_max`               |
//! | `pass:α`       | `0`                               |
//! | `zero:α`       | `0` (same rule as `pass`)         |
//! | `amp:αxA`      | `A·R_i`                           |
//!
//! `clamp` and `pass` are a reconstruction of filters defined elsewhere
//! with thresholds taken relative to `R_max`; only the amplifier's relative
//! threshold is given explicitly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterSpec {
    Identity,
    Clamp { alpha: f32 },
    FractionPass { alpha: f32 },
    ZeroKill { alpha: f32 },
    Amplifier { alpha: f32, gain: f32 },
}

fn check_alpha(alpha: f32) -> Result<f32> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(alpha)
    } else {
        Err(Error::config(format!("filter alpha must lie in (0, 1], got {alpha}")))
    }
}

impl FilterSpec {
    pub fn clamp(alpha: f32) -> Result<Self> {
        Ok(FilterSpec::Clamp {
            alpha: check_alpha(alpha)?,
        })
    }

    pub fn fraction_pass(alpha: f32) -> Result<Self> {
        Ok(FilterSpec::FractionPass {
            alpha: check_alpha(alpha)?,
        })
    }

    pub fn zero_kill(alpha: f32) -> Result<Self> {
        Ok(FilterSpec::ZeroKill {
            alpha: check_alpha(alpha)?,
        })
    }

    pub fn amplifier(alpha: f32, gain: f32) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::config(format!("amplifier gain must be positive, got {gain}")));
        }
        Ok(FilterSpec::Amplifier {
            alpha: check_alpha(alpha)?,
            gain,
        })
    }

    pub fn alpha(&self) -> Option<f32> {
        match *self {
            FilterSpec::Identity => None,
            FilterSpec::Clamp { alpha }
            | FilterSpec::FractionPass { alpha }
            | FilterSpec::ZeroKill { alpha }
            | FilterSpec::Amplifier { alpha, .. } => Some(alpha),
        }
    }

    /// Same kind with a different threshold fraction.
    pub fn with_alpha(&self, alpha: f32) -> Result<Self> {
        match *self {
            FilterSpec::Identity => Ok(FilterSpec::Identity),
            FilterSpec::Clamp { .. } => Self::clamp(alpha),
            FilterSpec::FractionPass { .. } => Self::fraction_pass(alpha),
            FilterSpec::ZeroKill { .. } => Self::zero_kill(alpha),
            FilterSpec::Amplifier { gain, .. } => Self::amplifier(alpha, gain),
        }
    }

    /// Applies the pixel rule with an explicit reference magnitude `r_max`
    /// instead of the map's own maximum.
    pub fn apply_with_reference(&self, r: &Tensor, r_max: f32) -> Tensor {
        let Some(alpha) = self.alpha() else {
            return r.clone();
        };
        if r_max == 0.0 {
            return r.clone();
        }
        let tau = alpha as f64 * r_max as f64;
        let large = |v: f32| (v.abs() as f64) >= tau;
        match *self {
            FilterSpec::Identity => r.clone(),
            FilterSpec::Clamp { .. } => {
                let level = tau as f32;
                r.map(|v| if large(v) { level.copysign(v) } else { v })
            }
            FilterSpec::FractionPass { .. } | FilterSpec::ZeroKill { .. } => {
                r.map(|v| if large(v) { 0.0 } else { v })
            }
            FilterSpec::Amplifier { gain, .. } => r.map(|v| if large(v) { gain * v } else { v }),
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::Identity => f.write_str("identity"),
            FilterSpec::Clamp { alpha } => write!(f, "clamp:{alpha}"),
            FilterSpec::FractionPass { alpha } => write!(f, "pass:{alpha}"),
            FilterSpec::ZeroKill { alpha } => write!(f, "zero:{alpha}"),
            FilterSpec::Amplifier { alpha, gain } => write!(f, "amp:{alpha}x{gain:?}"),
        }
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    /// `identity`, `clamp:0.2`, `pass:0.05`, `zero:0.05`, `amp:0.7x2.0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| {
            v.trim()
                .parse::<f32>()
                .map_err(|_| Error::config(format!("bad number '{v}' in filter '{s}'")))
        };
        match s.split_once(':') {
            None if s.eq_ignore_ascii_case("identity") => Ok(FilterSpec::Identity),
            Some(("clamp", a)) => Self::clamp(num(a)?),
            Some(("pass", a)) => Self::fraction_pass(num(a)?),
            Some(("zero", a)) => Self::zero_kill(num(a)?),
            Some(("amp", rest)) => {
                let (a, g) = rest
                    .split_once('x')
                    .ok_or_else(|| Error::config(format!("amplifier needs 'amp:<alpha>x<gain>', got '{s}'")))?;
                Self::amplifier(num(a)?, num(g)?)
            }
            _ => Err(Error::config(format!("unknown filter '{s}'"))),
        }
    }
}

/// Largest absolute value of the map, `0` for an all-zero map.
pub fn r_max(r: &Tensor) -> f32 {
    r.max_abs()
}

/// Filters `r` using thresholds relative to its own [`r_max`].
pub fn apply_filter(r: &Tensor, f: &FilterSpec) -> Tensor {
    f.apply_with_reference(r, r_max(r))
}

/// Filter assignment per relevance-map index `k` (the map `R⁽ᵏ⁾`, shaped like
/// layer `k`'s input). Unassigned maps are left untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterPlan {
    assignments: BTreeMap<usize, FilterSpec>,
}

impl FilterPlan {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn get(&self, k: usize) -> FilterSpec {
        self.assignments.get(&k).copied().unwrap_or(FilterSpec::Identity)
    }

    pub fn assignments(&self) -> impl Iterator<Item = (usize, FilterSpec)> + '_ {
        self.assignments.iter().map(|(&k, &f)| (k, f))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.assignments.keys().next_back().copied()
    }

    /// True when every assignment is the identity.
    pub fn is_identity(&self) -> bool {
        self.assignments.values().all(|f| *f == FilterSpec::Identity)
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        match self.max_index() {
            Some(k) if k > model.num_layers() => Err(Error::config(format!(
                "filter plan targets map {k}, but {} has maps 0..={}",
                model.name,
                model.num_layers()
            ))),
            _ => Ok(()),
        }
    }

    /// The same filter on the relevance map of every conv layer.
    pub fn at_conv_layers(model: &Model, spec: FilterSpec) -> Self {
        FilterPlan {
            assignments: model.conv_layers().into_iter().map(|k| (k, spec)).collect(),
        }
    }

    /// Only `R⁽⁰⁾` filtered.
    pub fn input_only(spec: FilterSpec) -> Self {
        FilterPlan {
            assignments: [(0, spec)].into_iter().collect(),
        }
    }
}

impl fmt::Display for FilterPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.assignments.is_empty() {
            return f.write_str("identity");
        }
        let parts: Vec<String> = self.assignments().map(|(k, s)| format!("{k}={s}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Builds a plan from `(map index, filter)` pairs; later pairs win.
pub fn compose_plan(model: &Model, assignments: &[(usize, FilterSpec)]) -> Result<FilterPlan> {
    let mut plan = FilterPlan::default();
    for &(k, spec) in assignments {
        if k > model.num_layers() {
            return Err(Error::config(format!(
                "filter assigned to map {k}, but {} has maps 0..={}",
                model.name,
                model.num_layers()
            )));
        }
        plan.assignments.insert(k, spec);
    }
    Ok(plan)
}
