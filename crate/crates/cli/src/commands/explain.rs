//! `explain`: heatmaps, the 1/10 view, filtered views and trace bundles.

use lrplab::filters::FilterSpec;
use lrplab::lrp::{explain, fractional_view, heatmap_2d};
use lrplab::metrics::{groundtruth_mask, masked_noise_score};
use lrplab::{Bundle, FilterPlan, Model};

use super::{create_dir, load_model, mean, selected_samples};
use crate::config::ExperimentConfig;
use crate::csvio::{Table, SCORES, VIEWS};
use crate::error::{CliError, Result};
use crate::image::render_heatmap;

pub const SCORES_CSV: &str = "scores.csv";
pub const VIEWS_CSV: &str = "views.csv";
pub const TENTH_VIEW: &str = "tenth";
pub const BASELINE: &str = "baseline";

/// Labelled plans rendered for every sample: the identity baseline, one
/// amplifier plan per configured alpha, and the configured filters if any.
pub fn plans(cfg: &ExperimentConfig, model: &Model) -> Result<Vec<(String, FilterPlan)>> {
    let mut out = vec![(BASELINE.to_string(), FilterPlan::identity())];
    for &a in &cfg.explain.amp_alphas {
        let spec = FilterSpec::amplifier(a as f32, cfg.explain.gain as f32)?;
        out.push((format!("p{a}"), FilterPlan::at_conv_layers(model, spec)));
    }
    if !cfg.lrp.filters.is_empty() {
        out.push(("filtered".into(), cfg.plan(model)?));
    }
    Ok(out)
}

/// Mean masked noise score per view.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewScore {
    pub view: String,
    pub mean_noise_score: f64,
    pub n_samples: usize,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ViewScore>> {
    let rule = cfg.rule()?;
    let formats = cfg.image_formats()?;
    let model = load_model(cfg)?;
    let plans = plans(cfg, &model)?;
    let samples = selected_samples(cfg, &model)?;
    let out = &cfg.run.out;
    create_dir(out)?;
    cfg.snapshot()?;

    let mut views: Vec<String> = vec![BASELINE.into(), TENTH_VIEW.into()];
    views.extend(plans.iter().skip(1).map(|(l, _)| l.clone()));
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); views.len()];
    let mut table = Table::create(&out.join(SCORES_CSV), SCORES)?;

    for (idx, sample) in &samples {
        let trace = model.forward_with_trace(&sample.image)?;
        let mask = groundtruth_mask(sample)?;
        let predicted = trace.predicted_class();
        let mut maps = Vec::with_capacity(views.len());
        for (label, plan) in &plans {
            let rel = explain(&model, &trace, None, rule, plan)?;
            let bundle_path = out.join(format!("s{idx:05}_{label}.lrpb"));
            Bundle::from(&rel).save(&bundle_path)?;
            let h = heatmap_2d(rel.input_relevance())?;
            if label == BASELINE {
                let tenth = fractional_view(&h, 0.1);
                maps.push((label.clone(), h));
                maps.push((TENTH_VIEW.to_string(), tenth));
            } else {
                maps.push((label.clone(), h));
            }
        }
        for (k, (view, h)) in maps.iter().enumerate() {
            render_heatmap(h)?.save(out, &format!("s{idx:05}_{view}"), formats)?;
            let s = masked_noise_score(h, &mask)?;
            scores[k].push(s);
            table.row([
                idx.to_string(),
                sample.label.to_string(),
                predicted.to_string(),
                view.clone(),
                s.to_string(),
            ])?;
        }
    }

    let summary: Vec<ViewScore> = views
        .into_iter()
        .zip(&scores)
        .map(|(view, s)| ViewScore {
            view,
            mean_noise_score: mean(s),
            n_samples: s.len(),
        })
        .collect();
    let mut t = Table::create(&out.join(VIEWS_CSV), VIEWS)?;
    for v in &summary {
        t.row([v.view.clone(), v.mean_noise_score.to_string(), v.n_samples.to_string()])?;
    }
    if summary.is_empty() {
        return Err(CliError::config("nothing to explain"));
    }
    Ok(summary)
}
