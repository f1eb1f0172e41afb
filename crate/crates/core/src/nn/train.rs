//! Minibatch training with periodic accuracy and Mean Power evaluation.

use super::adam::AdamState;
use super::grad::{loss_and_grad, Gradients};
use super::model::Model;
use crate::data::{batch_iterator, sample_subset, Dataset, Sample};
use crate::error::{Error, Result};
use crate::lrp::LrpRule;
use crate::metrics::{default_tracked_layers, mp_batch, LayerMp, TPolicy};
use crate::rng::{derive_seed, stream};

/// Fraction of samples whose predicted class (lowest index on ties) equals
/// the label.
pub fn evaluate_accuracy(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::arg("accuracy needs at least one sample"));
    }
    let mut correct = 0usize;
    for s in samples {
        if model.forward(&s.image)?.argmax() == s.label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// When and how a run is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSchedule {
    /// Evaluate at every multiple of this many iterations, including 0.
    pub every: usize,
    pub acc_n: usize,
    pub mp_n: usize,
    /// Conv layers whose relevance maps are tracked; `None` for the first four.
    pub layers: Option<Vec<usize>>,
    pub rule: LrpRule,
    pub t_policy: TPolicy,
    /// Reuse the same evaluation subsets at every evaluation instead of
    /// drawing fresh ones.
    pub pin_subsets: bool,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        EvalSchedule {
            every: 1000,
            acc_n: 1000,
            mp_n: 240,
            layers: None,
            rule: LrpRule::default(),
            t_policy: TPolicy::default(),
            pin_subsets: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch: usize,
    pub epochs: usize,
    /// Hard cap on iterations, applied after `epochs`.
    pub max_iterations: Option<usize>,
    pub schedule: EvalSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch: 4,
            epochs: 2,
            max_iterations: None,
            schedule: EvalSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn total_iterations(&self, train_len: usize) -> usize {
        let per_epoch = train_len.checked_div(self.batch).unwrap_or(0);
        let n = self.epochs * per_epoch;
        self.max_iterations.map_or(n, |cap| n.min(cap))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub iteration: usize,
    pub epoch: usize,
    pub accuracy: f64,
    /// Mean minibatch loss since the previous evaluation.
    pub train_loss: Option<f64>,
    pub layers: Vec<LayerMp>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<EvalRow>,
    pub iterations: usize,
}

impl TrainingLog {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.accuracy)
    }
}

/// Mean loss over `batch` and the averaged gradients.
pub fn batch_gradients(model: &Model, samples: &[Sample]) -> Result<(f64, Gradients)> {
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for s in samples {
        let trace = model.forward_with_trace(&s.image)?;
        let (l, g) = loss_and_grad(model, &trace, s.label as usize)?;
        loss += l;
        total.add_assign(&g);
    }
    let n = samples.len().max(1);
    total.scale(1.0 / n as f32);
    Ok((loss / n as f64, total))
}

fn evaluate(
    model: &Model,
    test: &Dataset,
    cfg: &TrainConfig,
    layers: &[usize],
    iteration: usize,
    epoch: usize,
    train_loss: Option<f64>,
) -> Result<EvalRow> {
    let s = &cfg.schedule;
    let tag = |stream: u64| {
        if s.pin_subsets {
            derive_seed(cfg.seed, &[stream])
        } else {
            derive_seed(cfg.seed, &[stream, iteration as u64])
        }
    };
    let acc_set = sample_subset(test, s.acc_n.min(test.len()), tag(stream::ACCURACY))?;
    let accuracy = evaluate_accuracy(model, &acc_set)?;
    let layers = if layers.is_empty() || s.mp_n == 0 {
        Vec::new()
    } else {
        let mp_set = sample_subset(test, s.mp_n.min(test.len()), tag(stream::MEAN_POWER))?;
        mp_batch(model, &mp_set, layers, s.rule, s.t_policy)?
    };
    Ok(EvalRow {
        iteration,
        epoch,
        accuracy,
        train_loss,
        layers,
    })
}

/// Trains `model` in place.
///
/// Evaluation happens before the first step and after every `every`-th
/// step; `on_eval` sees each row along with the current model and optimizer
/// state (for logging or checkpointing) and may abort the run with an error.
pub fn train(
    model: &mut Model,
    adam: &mut AdamState,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&EvalRow, &Model, &AdamState) -> Result<()>,
) -> Result<TrainingLog> {
    if cfg.schedule.every == 0 {
        return Err(Error::config("evaluation cadence must be positive"));
    }
    if test_set.is_empty() {
        return Err(Error::arg("test split is empty"));
    }
    let layers = match &cfg.schedule.layers {
        Some(l) => l.clone(),
        None => default_tracked_layers(model),
    };
    let total = cfg.total_iterations(train_set.len());
    let mut batches = batch_iterator(train_set, cfg.batch, derive_seed(cfg.seed, &[stream::BATCHES]))?;
    let per_epoch = batches.iterations_per_epoch();

    let mut log = TrainingLog::default();
    let row = evaluate(model, test_set, cfg, &layers, 0, 0, None)?;
    on_eval(&row, model, adam)?;
    log.rows.push(row);

    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for step in 1..=total {
        let batch = batches.next().expect("batch stream is endless");
        let samples: Vec<Sample> = batch.indices.iter().map(|&i| train_set.sample(i)).collect();
        let (loss, grads) = batch_gradients(model, &samples)?;
        adam.step(model.params_mut(), &grads.tensors)?;
        loss_sum += loss;
        loss_n += 1;
        if step % cfg.schedule.every == 0 {
            let epoch = step / per_epoch.max(1);
            let row = evaluate(model, test_set, cfg, &layers, step, epoch, Some(loss_sum / loss_n as f64))?;
            on_eval(&row, model, adam)?;
            log.rows.push(row);
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    log.iterations = total;
    Ok(log)
}
