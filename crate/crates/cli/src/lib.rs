//! Experiment driver behind the `lrplab` binary.
//!
//! Each subcommand resolves an [`config::ExperimentConfig`] from defaults, an
//! optional TOML file and flags, writes it as `config.toml` into the output
//! directory, and then runs. See [`args::Command`] for the subcommands.

pub mod args;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod image;

use args::Command;
pub use config::ExperimentConfig;
pub use error::{CliError, Result};

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Train(a) => {
            let log = commands::train::run(&a.resolve()?, true)?;
            report_accuracy(log.final_accuracy());
        }
        Command::MpTrend(a) => {
            let log = commands::train::run(&a.resolve()?, false)?;
            report_accuracy(log.final_accuracy());
        }
        Command::Explain(a) => {
            for v in commands::explain::run(&a.resolve()?)? {
                println!("{:<10} mean noise {:.6} over {} samples", v.view, v.mean_noise_score, v.n_samples);
            }
        }
        Command::AlphaSweep(a) => {
            for r in commands::sweep::run(&a.resolve()?)? {
                println!("alpha {:<6} mae {:.6}  p_alpha {:.6}  noise {:.6}", r.alpha, r.mae, r.p_alpha, r.noise_score);
            }
        }
        Command::RectifyCompare(a) => {
            for s in commands::compare::run(&a.resolve()?)? {
                println!("{:<10} mae {:.6}  p_alpha {:.6}  noise {:.6}", s.mode, s.mae, s.p_alpha, s.noise_score);
            }
        }
        Command::Render(a) => {
            for s in commands::render::run(&a.resolve()?)? {
                let f = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.3e}"));
                println!("layer {:>2}: {} points, MP slope {}", s.layer, s.n_points, f(s.mp));
            }
        }
    }
    Ok(())
}

fn report_accuracy(acc: Option<f64>) {
    if let Some(a) = acc {
        println!("final accuracy {a:.4}");
    }
}
