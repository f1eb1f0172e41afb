//! MNIST ingestion and seeded sampling.
//!
//! IDX files are read raw or gzip-compressed (detected by the gzip magic).
//! Pixels are scaled to `[0, 1]` by `v / 255`.

use std::borrow::Cow;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};
use flate2::read::GzDecoder;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{bilinear_resize, Tensor};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;
pub const ENLARGED_SIDE: usize = 140;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `1×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_stems(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// An immutable, ordered collection of samples.
///
/// Enlargement is recorded as a target resolution and applied on access; a
/// fully materialized 140×140 training split would need several gigabytes.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<u8>,
    split: Split,
    resize_to: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::format(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        for img in &images {
            img.chw("dataset image")?;
        }
        Ok(Dataset {
            images,
            labels,
            split,
            resize_to: None,
        })
    }

    pub fn from_samples(samples: Vec<Sample>, split: Split) -> Result<Self> {
        let (images, labels) = samples.into_iter().map(|s| (s.image, s.label)).unzip();
        Self::new(images, labels, split)
    }

    /// Reads `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let (img_stem, lbl_stem) = split.file_stems();
        let images = parse_idx_images(&read_maybe_gz(dir, img_stem)?)?;
        let labels = parse_idx_labels(&read_maybe_gz(dir, lbl_stem)?)?;
        Self::new(images, labels, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Shape of every produced image.
    pub fn image_shape(&self) -> Option<[usize; 3]> {
        let first = self.images.first()?;
        let (c, h, w) = first.chw("dataset image").ok()?;
        Some(match self.resize_to {
            Some((oh, ow)) => [c, oh, ow],
            None => [c, h, w],
        })
    }

    pub fn image(&self, i: usize) -> Cow<'_, Tensor> {
        let base = &self.images[i];
        match self.resize_to {
            Some((h, w)) if base.shape()[1..] != [h, w] => {
                // Inputs are in [0,1] and align-corners interpolation is convex.
                Cow::Owned(bilinear_resize(base, h, w).expect("validated image shape"))
            }
            _ => Cow::Borrowed(base),
        }
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            image: self.image(i).into_owned(),
            label: self.labels[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Serializes the (unresized) images and labels back to IDX bytes.
    pub fn to_idx(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        Ok((encode_idx_images(&self.images)?, encode_idx_labels(&self.labels)))
    }
}

fn read_maybe_gz(dir: &Path, stem: &str) -> Result<Vec<u8>> {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    let path = if plain.exists() || !gz.exists() { plain } else { gz };
    let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    decompress_if_gzip(raw).map_err(|e| Error::io(&path, e))
}

fn decompress_if_gzip(raw: Vec<u8>) -> std::io::Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], words: usize, magic: u32, what: &str) -> Result<Vec<usize>> {
    if bytes.len() < 4 * words {
        return Err(Error::Length {
            expected: 4 * words,
            found: bytes.len(),
        });
    }
    let found = BigEndian::read_u32(bytes);
    if found != magic {
        return Err(Error::format(format!(
            "{what}: magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    Ok((1..words)
        .map(|i| BigEndian::read_u32(&bytes[4 * i..]) as usize)
        .collect())
}

/// Parses an IDX3 image file into `1×rows×cols` tensors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let dims = header(bytes, 4, IMAGE_MAGIC, "image file")?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let px = rows * cols;
    let expected = 16 + count * px;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    if count > 0 && px == 0 {
        return Err(Error::format("image file: zero-sized images"));
    }
    bytes[16..expected]
        .chunks_exact(px.max(1))
        .take(count)
        .map(|chunk| {
            Tensor::new(
                vec![1, rows, cols],
                chunk.iter().map(|&v| v as f32 / 255.0).collect(),
            )
        })
        .collect()
}

/// Parses an IDX1 label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let dims = header(bytes, 2, LABEL_MAGIC, "label file")?;
    let count = dims[0];
    let body = bytes.get(8..8 + count).ok_or_else(|| {
        Error::format(format!(
            "label file truncated: {count} labels declared, {} bytes present",
            bytes.len().saturating_sub(8)
        ))
    })?;
    if let Some((i, &bad)) = body.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::format(format!("label {i} out of range: {bad}")));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &[Tensor]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first() {
        Some(t) => {
            let (_, h, w) = t.chw("idx image")?;
            (h, w)
        }
        None => (MNIST_SIDE, MNIST_SIDE),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.write_u32::<BigEndian>(word).expect("vec write");
    }
    for img in images {
        img.expect_shape(&[1, rows, cols], "idx image")?;
        out.extend(
            img.data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABEL_MAGIC).expect("vec write");
    out.write_u32::<BigEndian>(labels.len() as u32)
        .expect("vec write");
    out.extend_from_slice(labels);
    out
}

/// Resizes every image to 140×140.
pub fn enlarge_dataset(d: &Dataset) -> Result<Dataset> {
    match d.image_shape() {
        Some([_, h, w]) if h == MNIST_SIDE && w == MNIST_SIDE => {}
        None => {}
        Some(shape) => {
            return Err(Error::dim(format!(
                "enlarge_dataset expects 28×28 images, got {shape:?}"
            )))
        }
    }
    Ok(Dataset {
        resize_to: Some((ENLARGED_SIDE, ENLARGED_SIDE)),
        ..d.clone()
    })
}

/// Indices of `n` distinct samples drawn uniformly without replacement.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::arg("sample size must be positive"));
    }
    if n > len {
        return Err(Error::arg(format!(
            "cannot draw {n} samples from a dataset of {len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, len, n).into_vec())
}

pub fn sample_subset(d: &Dataset, n: usize, seed: u64) -> Result<Vec<Sample>> {
    Ok(sample_indices(d.len(), n, seed)?
        .into_iter()
        .map(|i| d.sample(i))
        .collect())
}

/// One minibatch of dataset indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub epoch: usize,
    /// Zero-based global iteration count.
    pub iteration: usize,
    pub indices: Vec<usize>,
}

/// Endless stream of minibatches; each epoch is a fresh permutation seeded by
/// `(seed, epoch)`, and the trailing partial batch is dropped.
#[derive(Clone, Debug)]
pub struct BatchIterator {
    len: usize,
    batch: usize,
    seed: u64,
    epoch: usize,
    cursor: usize,
    iteration: usize,
    order: Vec<usize>,
}

impl BatchIterator {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        if batch > len {
            return Err(Error::arg(format!(
                "batch size {batch} exceeds dataset size {len}"
            )));
        }
        let mut it = BatchIterator {
            len,
            batch,
            seed,
            epoch: 0,
            cursor: 0,
            iteration: 0,
            order: Vec::new(),
        };
        it.reshuffle();
        Ok(it)
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.len / self.batch
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[self.epoch as u64]));
        self.order = index::sample(&mut rng, self.len, self.len).into_vec();
        self.cursor = 0;
    }
}

impl Iterator for BatchIterator {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor + self.batch > self.len {
            self.epoch += 1;
            self.reshuffle();
        }
        let indices = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        let batch = Batch {
            epoch: self.epoch,
            iteration: self.iteration,
            indices,
        };
        self.iteration += 1;
        Some(batch)
    }
}

pub fn batch_iterator(d: &Dataset, batch: usize, seed: u64) -> Result<BatchIterator> {
    BatchIterator::new(d.len(), batch, seed)
}
