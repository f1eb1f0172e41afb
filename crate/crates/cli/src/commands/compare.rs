//! `rectify-compare`: filtering at every planned layer versus filtering the
//! input map only.

use lrplab::filters::FilterSpec;
use lrplab::metrics::{decompose_error, groundtruth_mask, mae, masked_noise_score};
use lrplab::{FilterPlan, Tensor};

use super::{create_dir, heatmap, load_model, mean, selected_samples};
use crate::config::ExperimentConfig;
use crate::csvio::{Table, RECTIFY, RECTIFY_SUMMARY};
use crate::error::Result;

pub const RECTIFY_CSV: &str = "rectify.csv";
pub const SUMMARY_CSV: &str = "rectify_summary.csv";
pub const LAYERWISE: &str = "layerwise";
pub const FINAL_ONLY: &str = "final-only";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeSummary {
    pub mode: String,
    pub mae: f64,
    pub p_alpha: f64,
    pub noise_score: f64,
    pub n_samples: usize,
}

/// The filter used on the input map: the one at the lowest planned index.
pub fn final_filter(plan: &FilterPlan) -> FilterSpec {
    plan.assignments()
        .map(|(_, s)| s)
        .find(|s| *s != FilterSpec::Identity)
        .unwrap_or(FilterSpec::Identity)
}

struct Scores {
    mae: Vec<f64>,
    p: Vec<f64>,
    noise: Vec<f64>,
}

impl Scores {
    fn new() -> Self {
        Scores { mae: Vec::new(), p: Vec::new(), noise: Vec::new() }
    }

    fn summary(&self, mode: &str) -> ModeSummary {
        ModeSummary {
            mode: mode.into(),
            mae: mean(&self.mae),
            p_alpha: mean(&self.p),
            noise_score: mean(&self.noise),
            n_samples: self.mae.len(),
        }
    }
}

/// Returns the layerwise, final-only and difference (layerwise minus
/// final-only) summaries.
pub fn run(cfg: &ExperimentConfig) -> Result<[ModeSummary; 3]> {
    let rule = cfg.rule()?;
    let model = load_model(cfg)?;
    let layerwise = cfg.plan(&model)?;
    let spec = final_filter(&layerwise);
    let final_only = FilterPlan::input_only(spec);
    let alpha = spec.alpha().unwrap_or(1.0) as f64;
    let samples = selected_samples(cfg, &model)?;
    let out = &cfg.run.out;
    create_dir(out)?;
    cfg.snapshot()?;

    let mut table = Table::create(&out.join(RECTIFY_CSV), RECTIFY)?;
    let mut scores = [Scores::new(), Scores::new()];
    for (idx, sample) in &samples {
        let trace = model.forward_with_trace(&sample.image)?;
        let mask = groundtruth_mask(sample)?;
        let g_ref = heatmap(&model, &trace, rule, &FilterPlan::identity())?;
        for (k, (mode, plan)) in [(LAYERWISE, &layerwise), (FINAL_ONLY, &final_only)].into_iter().enumerate() {
            let obs: Tensor = heatmap(&model, &trace, rule, plan)?;
            let (e, p, n) = (
                mae(&g_ref, &obs)?,
                decompose_error(&g_ref, &obs, alpha)?.p_alpha,
                masked_noise_score(&obs, &mask)?,
            );
            table.row([idx.to_string(), mode.to_string(), e.to_string(), p.to_string(), n.to_string()])?;
            scores[k].mae.push(e);
            scores[k].p.push(p);
            scores[k].noise.push(n);
        }
    }

    let a = scores[0].summary(LAYERWISE);
    let b = scores[1].summary(FINAL_ONLY);
    let diff = ModeSummary {
        mode: "difference".into(),
        mae: a.mae - b.mae,
        p_alpha: a.p_alpha - b.p_alpha,
        noise_score: a.noise_score - b.noise_score,
        n_samples: a.n_samples,
    };
    let mut t = Table::create(&out.join(SUMMARY_CSV), RECTIFY_SUMMARY)?;
    for s in [&a, &b, &diff] {
        t.row([
            s.mode.clone(),
            s.mae.to_string(),
            s.p_alpha.to_string(),
            s.noise_score.to_string(),
            s.n_samples.to_string(),
        ])?;
    }
    Ok([a, b, diff])
}
