//! Experiment configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags. Every key mirrors a flag.

use std::path::{Path, PathBuf};

use lrplab::filters::{compose_plan, FilterPlan, FilterSpec};
use lrplab::lrp::LrpRule;
use lrplab::metrics::TPolicy;
use lrplab::nn::{AdamConfig, EvalSchedule, Model, ModelName, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub lrp: LrpSection,
    pub explain: ExplainSection,
    pub sweep: SweepSection,
    pub render: RenderSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub model: String,
    pub data_dir: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    /// Image files to write: `ppm`, `png` or `both`.
    pub format: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cap on the total iteration count.
    pub iterations: Option<usize>,
    pub eval_every: usize,
    pub acc_n: usize,
    pub mp_n: usize,
    /// Tracked conv layers; the first four when absent.
    pub layers: Option<Vec<usize>>,
    pub pin_subsets: bool,
    /// Checkpoint at evaluations whose iteration is a multiple of this; `0`
    /// disables them. `train` always writes the final model.
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrpSection {
    pub rule: String,
    pub t_policy: String,
    /// `layer=spec` entries; `layer` is an index, `conv` or `input`.
    pub filters: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub checkpoint: Option<PathBuf>,
    /// Test-split indices, e.g. `0..20` or `3,5,10..12`.
    pub samples: String,
    pub amp_alphas: Vec<f64>,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `clamp`, `pass`, `zero` or `amp`.
    pub kind: String,
    pub alphas: Vec<f64>,
    /// Filters of the reference plan; identity when empty.
    pub reference: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub mp_csv: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            model: "s1".into(),
            data_dir: PathBuf::from("data/mnist"),
            seed: 0,
            out: PathBuf::from("runs/out"),
            format: "both".into(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = EvalSchedule::default();
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch: t.batch,
            lr: 1e-4,
            iterations: None,
            eval_every: s.every,
            acc_n: s.acc_n,
            mp_n: s.mp_n,
            layers: None,
            pin_subsets: false,
            checkpoint_every: 5000,
        }
    }
}

impl Default for LrpSection {
    fn default() -> Self {
        LrpSection {
            rule: LrpRule::default().to_string(),
            t_policy: TPolicy::default().to_string(),
            filters: Vec::new(),
        }
    }
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            checkpoint: None,
            samples: "0..20".into(),
            amp_alphas: vec![0.5, 0.7],
            gain: 2.0,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            kind: "clamp".into(),
            alphas: vec![0.05, 0.2, 0.6],
            reference: Vec::new(),
        }
    }
}

/// Which image files to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageFormats {
    pub ppm: bool,
    pub png: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("bad config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration into the output directory.
    pub fn snapshot(&self) -> Result<PathBuf> {
        let path = self.run.out.join(CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn model_name(&self) -> Result<ModelName> {
        Ok(self.run.model.parse()?)
    }

    pub fn rule(&self) -> Result<LrpRule> {
        Ok(self.lrp.rule.parse()?)
    }

    pub fn t_policy(&self) -> Result<TPolicy> {
        Ok(self.lrp.t_policy.parse()?)
    }

    pub fn plan(&self, model: &Model) -> Result<FilterPlan> {
        parse_plan(&self.lrp.filters, model)
    }

    pub fn samples(&self) -> Result<Vec<usize>> {
        parse_selector(&self.explain.samples)
    }

    pub fn image_formats(&self) -> Result<ImageFormats> {
        match self.run.format.as_str() {
            "ppm" => Ok(ImageFormats { ppm: true, png: false }),
            "png" => Ok(ImageFormats { ppm: false, png: true }),
            "both" => Ok(ImageFormats { ppm: true, png: true }),
            other => Err(CliError::config(format!("image format must be ppm, png or both, got '{other}'"))),
        }
    }

    pub fn checkpoint(&self) -> Result<&Path> {
        self.explain
            .checkpoint
            .as_deref()
            .ok_or_else(|| CliError::config("a checkpoint is required (--checkpoint)"))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        if t.batch == 0 || t.eval_every == 0 || t.acc_n == 0 || t.mp_n == 0 {
            return Err(CliError::config("batch, eval-every, acc-n and mp-n must be positive"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(CliError::config(format!("learning rate must be positive, got {}", t.lr)));
        }
        Ok(TrainConfig {
            seed: self.run.seed,
            batch: t.batch,
            epochs: t.epochs,
            max_iterations: t.iterations,
            schedule: EvalSchedule {
                every: t.eval_every,
                acc_n: t.acc_n,
                mp_n: t.mp_n,
                layers: t.layers.clone(),
                rule: self.rule()?,
                t_policy: self.t_policy()?,
                pin_subsets: t.pin_subsets,
            },
        })
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.train.lr as f32,
            ..AdamConfig::default()
        }
    }
}

/// Where one `layer=spec` entry applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Site {
    Map(usize),
    Conv,
    Input,
}

pub fn parse_filter_entry(entry: &str) -> Result<(Site, FilterSpec)> {
    let (site, spec) = match entry.split_once('=') {
        Some((site, spec)) => {
            let site = match site.trim() {
                "conv" => Site::Conv,
                "input" => Site::Input,
                k => Site::Map(
                    k.parse()
                        .map_err(|_| CliError::config(format!("bad filter site '{k}' in '{entry}'")))?,
                ),
            };
            (site, spec)
        }
        None => (Site::Conv, entry),
    };
    Ok((site, spec.trim().parse()?))
}

/// Builds a plan from filter entries, later entries overriding earlier ones.
pub fn parse_plan(entries: &[String], model: &Model) -> Result<FilterPlan> {
    let mut pairs = Vec::new();
    for e in entries {
        let (site, spec) = parse_filter_entry(e)?;
        match site {
            Site::Map(k) => pairs.push((k, spec)),
            Site::Input => pairs.push((0, spec)),
            Site::Conv => pairs.extend(model.conv_layers().into_iter().map(|k| (k, spec))),
        }
    }
    Ok(compose_plan(model, &pairs)?)
}

/// `a..b` ranges and single indices, comma separated, in the order given.
pub fn parse_selector(text: &str) -> Result<Vec<usize>> {
    let bad = || CliError::config(format!("bad sample selector '{text}'"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if b <= a {
                    return Err(bad());
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Comma-separated numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::config(format!("bad {what} '{p}'"))))
        .collect()
}
