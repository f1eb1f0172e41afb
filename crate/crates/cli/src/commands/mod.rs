pub mod compare;
pub mod explain;
pub mod render;
pub mod sweep;
pub mod train;

use std::path::Path;

use lrplab::data::{enlarge_dataset, ENLARGED_SIDE};
use lrplab::lrp::{explain, heatmap_2d, LrpRule};
use lrplab::nn::Checkpoint;
use lrplab::{ActivationTrace, Dataset, FilterPlan, Model, Sample, Split, Tensor};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// A split at the resolution the model expects.
pub fn load_split(data_dir: &Path, split: Split, input_side: usize) -> Result<Dataset> {
    let d = Dataset::load(data_dir, split)?;
    Ok(if input_side == ENLARGED_SIDE { enlarge_dataset(&d)? } else { d })
}

pub fn load_model(cfg: &ExperimentConfig) -> Result<Model> {
    Ok(Checkpoint::load(cfg.checkpoint()?)?.model)
}

/// The selected test samples, with their indices.
pub fn selected_samples(cfg: &ExperimentConfig, model: &Model) -> Result<Vec<(usize, Sample)>> {
    let test = load_split(&cfg.run.data_dir, Split::Test, model.input_shape[1])?;
    let idx = cfg.samples()?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= test.len()) {
        return Err(CliError::config(format!("sample {bad} is outside the test split of {}", test.len())));
    }
    Ok(idx.into_iter().map(|i| (i, test.sample(i))).collect())
}

/// The input heatmap of one explanation.
pub fn heatmap(model: &Model, trace: &ActivationTrace, rule: LrpRule, plan: &FilterPlan) -> Result<Tensor> {
    let rel = explain(model, trace, None, rule, plan)?;
    Ok(heatmap_2d(rel.input_relevance())?)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
