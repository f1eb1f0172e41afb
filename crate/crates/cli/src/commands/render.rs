//! `render`: per-layer Mean Power trend plots and least-squares slopes.

use std::collections::BTreeMap;
use std::path::Path;

use lrplab::metrics::least_squares_slope;

use super::create_dir;
use crate::config::ExperimentConfig;
use crate::csvio::{num, read, Table, MP_TREND, SLOPES};
use crate::error::{CliError, Result};
use crate::image::line_plot;

pub const SLOPES_CSV: &str = "slopes.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrend {
    pub layer: usize,
    /// `(iteration, mp)` where the batch mean is defined.
    pub mp: Vec<(f64, f64)>,
    pub mp_plus: Vec<(f64, f64)>,
    pub mp_minus: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSlopes {
    pub layer: usize,
    pub n_points: usize,
    pub mp: Option<f64>,
    pub mp_plus: Option<f64>,
    pub mp_minus: Option<f64>,
}

/// Parses an MP-trend CSV into per-layer series, in layer order.
pub fn read_trends(path: &Path) -> Result<Vec<LayerTrend>> {
    let mut by_layer: BTreeMap<usize, LayerTrend> = BTreeMap::new();
    for (i, rec) in read(path, MP_TREND)?.iter().enumerate() {
        let bad = |what: &str| CliError::format(format!("{}: row {}: bad {what}", path.display(), i + 1));
        let iteration: f64 = rec[0].parse::<usize>().map_err(|_| bad("iteration"))? as f64;
        let layer: usize = rec[2].parse().map_err(|_| bad("layer"))?;
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        let t = by_layer.entry(layer).or_insert_with(|| LayerTrend {
            layer,
            mp: Vec::new(),
            mp_plus: Vec::new(),
            mp_minus: Vec::new(),
        });
        for (field, series, what) in [(3, &mut t.mp_plus, "mp_plus"), (4, &mut t.mp_minus, "mp_minus"), (5, &mut t.mp, "mp")] {
            if let Some(v) = opt(&rec[field], what)? {
                series.push((iteration, v));
            }
        }
    }
    Ok(by_layer.into_values().collect())
}

pub fn slopes(t: &LayerTrend) -> LayerSlopes {
    LayerSlopes {
        layer: t.layer,
        n_points: t.mp.len(),
        mp: least_squares_slope(&t.mp),
        mp_plus: least_squares_slope(&t.mp_plus),
        mp_minus: least_squares_slope(&t.mp_minus),
    }
}

/// Writes `mp_layer_<k>` plots and the slopes table into the output
/// directory.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<LayerSlopes>> {
    let mp_csv = cfg
        .render
        .mp_csv
        .as_deref()
        .ok_or_else(|| CliError::config("render needs an MP-trend CSV (--mp-csv)"))?;
    let formats = cfg.image_formats()?;
    let trends = read_trends(mp_csv)?;
    let out = &cfg.run.out;
    create_dir(out)?;
    cfg.snapshot()?;
    let mut table = Table::create(&out.join(SLOPES_CSV), SLOPES)?;
    let mut all = Vec::with_capacity(trends.len());
    for t in &trends {
        let s = slopes(t);
        line_plot(&t.mp, s.mp).save(out, &format!("mp_layer_{}", t.layer), formats)?;
        table.row([
            s.layer.to_string(),
            s.n_points.to_string(),
            num(s.mp),
            num(s.mp_plus),
            num(s.mp_minus),
        ])?;
        all.push(s);
    }
    Ok(all)
}
