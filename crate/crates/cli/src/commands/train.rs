//! `train` and `mp-trend`.

use std::path::PathBuf;

use lrplab::nn::{train, AdamState, Checkpoint, EvalRow, TrainingLog};
use lrplab::{Model, Split};

use super::{create_dir, load_split};
use crate::config::ExperimentConfig;
use crate::csvio::{num, Table, MP_TREND, TRAINING};
use crate::error::{CliError, Result};

pub const TRAINING_CSV: &str = "training.csv";
pub const MP_TREND_CSV: &str = "mp_trend.csv";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn mp_rows(row: &EvalRow) -> impl Iterator<Item = [String; 7]> + '_ {
    row.layers.iter().map(move |l| {
        [
            row.iteration.to_string(),
            row.accuracy.to_string(),
            l.layer.to_string(),
            num(l.mp_plus),
            num(l.mp_minus),
            num(l.mp),
            l.undefined_count().to_string(),
        ]
    })
}

/// Trains the configured model from scratch, logging accuracy and Mean Power
/// at every evaluation. Checkpoints are written only when `checkpoints`.
pub fn run(cfg: &ExperimentConfig, checkpoints: bool) -> Result<TrainingLog> {
    let name = cfg.model_name()?;
    let tc = cfg.train_config()?;
    let mut model = Model::named(name, cfg.run.seed);
    let side = model.input_shape[1];
    let train_set = load_split(&cfg.run.data_dir, Split::Train, side)?;
    let test_set = load_split(&cfg.run.data_dir, Split::Test, side)?;
    if tc.schedule.acc_n > test_set.len() || tc.schedule.mp_n > test_set.len() {
        return Err(CliError::config(format!(
            "acc-n {} / mp-n {} exceed the test split of {}",
            tc.schedule.acc_n,
            tc.schedule.mp_n,
            test_set.len()
        )));
    }

    let out = &cfg.run.out;
    create_dir(out)?;
    cfg.snapshot()?;
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    if checkpoints && cfg.train.checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    let mut training = Table::create(&out.join(TRAINING_CSV), TRAINING)?;
    let mut mp = Table::create(&out.join(MP_TREND_CSV), MP_TREND)?;
    let total = tc.total_iterations(train_set.len());
    eprintln!("{name}: {total} iterations, {} parameters", model.count_params());

    let mut adam = AdamState::new(cfg.adam(), &model.params());
    let to_core = |e: CliError| match e {
        CliError::Core(e) => e,
        CliError::Io { path, source } => lrplab::Error::io(path, source),
        other => lrplab::Error::io(PathBuf::new(), std::io::Error::other(other.to_string())),
    };
    let log = train(&mut model, &mut adam, &train_set, &test_set, &tc, |row, model, adam| {
        eprintln!(
            "iteration {:>6}  epoch {}  accuracy {:.4}  loss {}",
            row.iteration,
            row.epoch,
            row.accuracy,
            row.train_loss.map_or("-".into(), |l| format!("{l:.4}"))
        );
        training
            .row([
                row.iteration.to_string(),
                row.epoch.to_string(),
                row.accuracy.to_string(),
                num(row.train_loss),
            ])
            .map_err(to_core)?;
        for r in mp_rows(row) {
            mp.row(r).map_err(to_core)?;
        }
        let every = cfg.train.checkpoint_every;
        if checkpoints && every > 0 && row.iteration > 0 && row.iteration % every == 0 {
            let ck = Checkpoint {
                model: model.clone(),
                iteration: row.iteration as u64,
                adam: Some(adam.clone()),
            };
            ck.save(&ckpt_dir.join(format!("iter-{:06}.ckpt", row.iteration)))?;
        }
        Ok(())
    })?;

    if checkpoints {
        Checkpoint {
            model,
            iteration: log.iterations as u64,
            adam: Some(adam),
        }
        .save(&out.join(FINAL_CHECKPOINT))?;
    }
    Ok(log)
}
