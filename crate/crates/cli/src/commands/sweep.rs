//! `alpha-sweep`: one filter kind at the conv-layer maps over a list of
//! thresholds, scored against a reference plan.

use lrplab::filters::FilterSpec;
use lrplab::metrics::{decompose_error, groundtruth_mask, mae, masked_noise_score};
use lrplab::{FilterPlan, Model};

use super::{create_dir, heatmap, load_model, mean, selected_samples};
use crate::config::{parse_plan, ExperimentConfig};
use crate::csvio::{Table, SWEEP};
use crate::error::{CliError, Result};

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub mae: f64,
    /// Share of the unfiltered heatmap at or above `alpha·max`.
    pub p_alpha: f64,
    pub noise_score: f64,
    pub n_samples: usize,
}

pub fn filter_of_kind(kind: &str, alpha: f64, gain: f64) -> Result<FilterSpec> {
    let a = alpha as f32;
    Ok(match kind {
        "clamp" => FilterSpec::clamp(a)?,
        "pass" => FilterSpec::fraction_pass(a)?,
        "zero" => FilterSpec::zero_kill(a)?,
        "amp" => FilterSpec::amplifier(a, gain as f32)?,
        other => {
            return Err(CliError::config(format!("sweep kind must be clamp, pass, zero or amp, got '{other}'")))
        }
    })
}

/// Validated thresholds in ascending order.
pub fn sorted_alphas(alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(CliError::config("alpha sweep needs at least one alpha"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(CliError::config(format!("alphas must lie in (0, 1], got {a}")));
    }
    let mut v = alphas.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rule = cfg.rule()?;
    let alphas = sorted_alphas(&cfg.sweep.alphas)?;
    let model: Model = load_model(cfg)?;
    let plans: Vec<FilterPlan> = alphas
        .iter()
        .map(|&a| Ok(FilterPlan::at_conv_layers(&model, filter_of_kind(&cfg.sweep.kind, a, cfg.explain.gain)?)))
        .collect::<Result<_>>()?;
    let reference = parse_plan(&cfg.sweep.reference, &model)?;
    let samples = selected_samples(cfg, &model)?;
    create_dir(&cfg.run.out)?;
    cfg.snapshot()?;

    let n = alphas.len();
    let (mut maes, mut ps, mut noise) = (vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]);
    for (_, sample) in &samples {
        let trace = model.forward_with_trace(&sample.image)?;
        let mask = groundtruth_mask(sample)?;
        let base = heatmap(&model, &trace, rule, &FilterPlan::identity())?;
        let g_ref = if reference.is_identity() { base.clone() } else { heatmap(&model, &trace, rule, &reference)? };
        for (i, (&alpha, plan)) in alphas.iter().zip(&plans).enumerate() {
            let obs = heatmap(&model, &trace, rule, plan)?;
            maes[i].push(mae(&g_ref, &obs)?);
            ps[i].push(decompose_error(&g_ref, &base, alpha)?.p_alpha);
            noise[i].push(masked_noise_score(&obs, &mask)?);
        }
    }

    let mut table = Table::create(&cfg.run.out.join(SWEEP_CSV), SWEEP)?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let row = SweepRow {
            alpha: alphas[i],
            mae: mean(&maes[i]),
            p_alpha: mean(&ps[i]),
            noise_score: mean(&noise[i]),
            n_samples: samples.len(),
        };
        table.row([
            row.alpha.to_string(),
            row.mae.to_string(),
            row.p_alpha.to_string(),
            row.noise_score.to_string(),
            row.n_samples.to_string(),
        ])?;
        rows.push(row);
    }
    Ok(rows)
}
