//! Command-line flags. Every flag is optional; given flags override the
//! config file, which overrides the defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_list, ExperimentConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "lrplab", version, about = "Layer-wise relevance propagation experiments on MNIST")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model, tracking accuracy and Mean Power; writes checkpoints.
    Train(TrainArgs),
    /// Same as `train` without checkpoints.
    MpTrend(TrainArgs),
    /// Heatmaps, the 1/10 view, amplifier views and trace bundles.
    Explain(ExplainArgs),
    /// Score one filter kind over a list of thresholds.
    AlphaSweep(SweepArgs),
    /// Compare filtering at every planned layer against the input map only.
    RectifyCompare(CompareArgs),
    /// Plot an MP-trend CSV per layer and fit slopes.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// s1, s2, al1 or al2.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `eps:<e>` or `ab:<alpha>,<beta>`.
    #[arg(long)]
    pub rule: Option<String>,
    /// `layer=spec` with layer an index, `conv` or `input`; repeatable.
    #[arg(long = "filter")]
    pub filters: Vec<String>,
    /// `rel:<fraction>` or `abs:<t>`.
    #[arg(long)]
    pub t_policy: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// ppm, png or both.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Cap on the iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub acc_n: Option<usize>,
    #[arg(long)]
    pub mp_n: Option<usize>,
    /// Comma-separated conv layer indices to track.
    #[arg(long)]
    pub layers: Option<String>,
    /// Reuse one evaluation subset for the whole run.
    #[arg(long)]
    pub pin_subsets: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Test indices: `0..20`, `3,7`, or a mix.
    #[arg(long)]
    pub samples: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub select: SampleArgs,
    /// Comma-separated amplifier thresholds, one view each.
    #[arg(long)]
    pub amp_alphas: Option<String>,
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub select: SampleArgs,
    /// clamp, pass, zero or amp.
    #[arg(long)]
    pub kind: Option<String>,
    /// Comma-separated thresholds in (0, 1].
    #[arg(long)]
    pub alphas: Option<String>,
    /// Amplifier gain for `--kind amp`.
    #[arg(long)]
    pub gain: Option<f64>,
    /// Reference plan entries (`layer=spec`); identity when absent.
    #[arg(long = "reference")]
    pub reference: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub select: SampleArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub mp_csv: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl CommonArgs {
    /// The config file if given, with these flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        set(&mut c.run.model, self.model.clone());
        set(&mut c.run.data_dir, self.data_dir.clone());
        set(&mut c.run.seed, self.seed);
        set(&mut c.run.out, self.out.clone());
        set(&mut c.run.format, self.format.clone());
        set(&mut c.lrp.rule, self.rule.clone());
        set(&mut c.lrp.t_policy, self.t_policy.clone());
        if !self.filters.is_empty() {
            c.lrp.filters = self.filters.clone();
        }
        Ok(c)
    }
}

impl SampleArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        if self.checkpoint.is_some() {
            c.explain.checkpoint = self.checkpoint.clone();
        }
        set(&mut c.explain.samples, self.samples.clone());
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.common.resolve()?;
        let t = &mut c.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch, self.batch);
        set(&mut t.lr, self.lr);
        set(&mut t.eval_every, self.eval_every);
        set(&mut t.acc_n, self.acc_n);
        set(&mut t.mp_n, self.mp_n);
        set(&mut t.checkpoint_every, self.checkpoint_every);
        if self.iterations.is_some() {
            t.iterations = self.iterations;
        }
        if let Some(l) = &self.layers {
            t.layers = Some(parse_list(l, "layer index")?);
        }
        if self.pin_subsets {
            t.pin_subsets = true;
        }
        Ok(c)
    }
}

impl ExplainArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.common.resolve()?;
        self.select.apply(&mut c);
        if let Some(a) = &self.amp_alphas {
            c.explain.amp_alphas = parse_list(a, "alpha")?;
        }
        set(&mut c.explain.gain, self.gain);
        Ok(c)
    }
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.common.resolve()?;
        self.select.apply(&mut c);
        set(&mut c.sweep.kind, self.kind.clone());
        if let Some(a) = &self.alphas {
            c.sweep.alphas = parse_list(a, "alpha")?;
        }
        set(&mut c.explain.gain, self.gain);
        if !self.reference.is_empty() {
            c.sweep.reference = self.reference.clone();
        }
        Ok(c)
    }
}

impl CompareArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.common.resolve()?;
        self.select.apply(&mut c);
        Ok(c)
    }
}

impl RenderArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.common.resolve()?;
        if self.mp_csv.is_some() {
            c.render.mp_csv = self.mp_csv.clone();
        }
        Ok(c)
    }
}
