//! Versioned CSV files: a `# schema: <name> v<N>` line, then a header row.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

pub const MP_TREND: (&str, &[&str]) = (
    "lrplab-mp-trend v1",
    &["iteration", "accuracy", "layer", "mp_plus", "mp_minus", "mp", "undefined_count"],
);
pub const TRAINING: (&str, &[&str]) = ("lrplab-training v1", &["iteration", "epoch", "accuracy", "train_loss"]);
pub const SWEEP: (&str, &[&str]) = ("lrplab-sweep v1", &["alpha", "mae", "p_alpha", "noise_score", "n_samples"]);
pub const SCORES: (&str, &[&str]) = ("lrplab-scores v1", &["sample", "label", "predicted", "view", "noise_score"]);
pub const VIEWS: (&str, &[&str]) = ("lrplab-views v1", &["view", "mean_noise_score", "n_samples"]);
pub const RECTIFY: (&str, &[&str]) = ("lrplab-rectify v1", &["sample", "mode", "mae", "p_alpha", "noise_score"]);
pub const RECTIFY_SUMMARY: (&str, &[&str]) =
    ("lrplab-rectify-summary v1", &["mode", "mae", "p_alpha", "noise_score", "n_samples"]);
pub const SLOPES: (&str, &[&str]) =
    ("lrplab-slopes v1", &["layer", "n_points", "slope_mp", "slope_mp_plus", "slope_mp_minus"]);

/// A CSV writer that flushes after every record.
pub struct Table {
    path: PathBuf,
    inner: csv::Writer<File>,
}

fn io_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, std::io::Error::other(e))
}

impl Table {
    pub fn create(path: &Path, (schema, header): (&str, &[&str])) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
        writeln!(file, "# schema: {schema}").map_err(|e| CliError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header).map_err(io_err(path))?;
        Ok(Table {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(io_err(&self.path))?;
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Shortest round-trip text for a value; empty for an undefined one.
pub fn num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Reads a CSV written by [`Table`], checking the schema line and header.
pub fn read(path: &Path, (schema, header): (&str, &[&str])) -> Result<Vec<csv::StringRecord>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    let want = format!("# schema: {schema}");
    if first.trim_end() != want {
        return Err(CliError::format(format!(
            "{}: expected '{want}' as the first line, found '{}'",
            path.display(),
            first.trim_end()
        )));
    }
    let mut r = csv::Reader::from_reader(reader);
    let bad = |e: csv::Error| CliError::format(format!("{}: {e}", path.display()));
    let found = r.headers().map_err(bad)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(format!("{}: unexpected header {:?}", path.display(), found)));
    }
    r.records().map(|rec| rec.map_err(bad)).collect()
}
