//! Helpers for driving the `lrplab` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrplab::data::{encode_idx_images, encode_idx_labels};
use lrplab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_lrplab"))
}

pub fn lrplab<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).output().expect("spawn lrplab")
}

/// Runs and panics with stderr on a non-zero exit.
pub fn ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = lrplab(args);
    assert!(
        out.status.success(),
        "lrplab failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A digit-like image: a bright random stroke on a zero background.
fn synthetic_image(r: &mut ChaCha8Rng, label: u8) -> Tensor {
    let side = 28;
    let mut v = vec![0f32; side * side];
    let (cx, cy) = (6 + 2 * (label as usize % 5), 8 + 4 * (label as usize / 5));
    for _ in 0..60 {
        let x = (cx + r.random_range(0..10)).min(side - 1);
        let y = (cy + r.random_range(0..10)).min(side - 1);
        v[y * side + x] = r.random_range(1u8..=255) as f32 / 255.0;
    }
    Tensor::new(vec![1, side, side], v).unwrap()
}

/// Writes `train` and `test` IDX splits of synthetic 28×28 images into `dir`.
pub fn write_mnist(dir: &Path, train: usize, test: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for (n, img, lbl) in [
        (train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        (test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ] {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let images: Vec<Tensor> = labels.iter().map(|&l| synthetic_image(&mut r, l)).collect();
        std::fs::write(dir.join(img), encode_idx_images(&images).unwrap()).unwrap();
        std::fs::write(dir.join(lbl), encode_idx_labels(&labels)).unwrap();
    }
}

/// Data rows of a schema-tagged CSV, without the schema line and header.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema: lrplab-"));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

pub fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().nth(1).unwrap().to_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
