//! Versioned binary checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "LRPCKPT\0"
//! version    u32      1
//! name       u32 length + UTF-8 bytes
//! iteration  u64
//! input      3 × u32  (C, H, W)
//! layers     u32 count, then per layer a u8 tag and its u32 fields:
//!              0 conv     out_channels kernel stride pad
//!              1 maxpool  size stride
//!              2 relu
//!              3 flatten
//!              4 dense    out_features
//! params     u32 count, then tensors in layer order (weight, bias)
//! adam       u8 flag; if 1: u64 t, f32 lr beta1 beta2 eps,
//!            u32 count, m tensors, v tensors
//! tensor     u32 ndim, ndim × u32 extents, f32 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::adam::{AdamConfig, AdamState};
use super::layer::LayerKind;
use super::model::{Model, Recipe};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LRPCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub iteration: u64,
    pub adam: Option<AdamState>,
}

fn fmt_err(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::format("checkpoint is truncated")
    } else {
        Error::format(format!("unreadable checkpoint: {e}"))
    }
}

pub(crate) fn write_tensor(w: &mut impl Write, t: &Tensor) -> std::io::Result<()> {
    w.write_u32::<LE>(t.ndim() as u32)?;
    for &d in t.shape() {
        w.write_u32::<LE>(d as u32)?;
    }
    for &v in t.data() {
        w.write_f32::<LE>(v)?;
    }
    Ok(())
}

/// Upper bound on elements accepted from a file, to reject garbage headers
/// before allocating.
const MAX_ELEMENTS: usize = 1 << 28;

pub(crate) fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let ndim = r.read_u32::<LE>().map_err(fmt_err)? as usize;
    if ndim > 8 {
        return Err(Error::format(format!("tensor with {ndim} dimensions")));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut n = 1usize;
    for _ in 0..ndim {
        let d = r.read_u32::<LE>().map_err(fmt_err)? as usize;
        n = n.saturating_mul(d);
        shape.push(d);
    }
    if n > MAX_ELEMENTS {
        return Err(Error::format(format!("tensor of shape {shape:?} is too large")));
    }
    let mut data = vec![0.0f32; n];
    r.read_f32_into::<LE>(&mut data).map_err(fmt_err)?;
    Tensor::new(shape, data).map_err(|e| Error::format(e.to_string()))
}

fn write_kind(w: &mut impl Write, k: &LayerKind) -> std::io::Result<()> {
    match *k {
        LayerKind::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        } => {
            w.write_u8(0)?;
            for v in [out_channels, kernel, stride, pad] {
                w.write_u32::<LE>(v as u32)?;
            }
        }
        LayerKind::MaxPool { size, stride } => {
            w.write_u8(1)?;
            w.write_u32::<LE>(size as u32)?;
            w.write_u32::<LE>(stride as u32)?;
        }
        LayerKind::Relu => w.write_u8(2)?,
        LayerKind::Flatten => w.write_u8(3)?,
        LayerKind::Dense { out_features } => {
            w.write_u8(4)?;
            w.write_u32::<LE>(out_features as u32)?;
        }
    }
    Ok(())
}

const MAX_LAYER_FIELD: u32 = 1 << 16;

fn read_kind(r: &mut impl Read) -> Result<LayerKind> {
    let tag = r.read_u8().map_err(fmt_err)?;
    let mut u = || match r.read_u32::<LE>().map_err(fmt_err)? {
        v if v <= MAX_LAYER_FIELD => Ok(v as usize),
        v => Err(Error::format(format!("implausible layer field {v}"))),
    };
    Ok(match tag {
        0 => LayerKind::Conv {
            out_channels: u()?,
            kernel: u()?,
            stride: u()?,
            pad: u()?,
        },
        1 => LayerKind::MaxPool {
            size: u()?,
            stride: u()?,
        },
        2 => LayerKind::Relu,
        3 => LayerKind::Flatten,
        4 => LayerKind::Dense { out_features: u()? },
        t => return Err(Error::format(format!("unknown layer tag {t}"))),
    })
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        let name = self.model.name.as_bytes();
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_u64::<LE>(self.iteration)?;
        for d in self.model.input_shape {
            w.write_u32::<LE>(d as u32)?;
        }
        let recipe = self.model.recipe();
        w.write_u32::<LE>(recipe.layers.len() as u32)?;
        for k in &recipe.layers {
            write_kind(w, k)?;
        }
        let params = self.model.params();
        w.write_u32::<LE>(params.len() as u32)?;
        for p in params {
            write_tensor(w, p)?;
        }
        match &self.adam {
            None => w.write_u8(0)?,
            Some(a) => {
                w.write_u8(1)?;
                w.write_u64::<LE>(a.t)?;
                for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
                    w.write_f32::<LE>(v)?;
                }
                w.write_u32::<LE>(a.m.len() as u32)?;
                for t in a.m.iter().chain(&a.v) {
                    write_tensor(w, t)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt_err)?;
        if &magic != MAGIC {
            return Err(Error::format("not a checkpoint (bad magic)"));
        }
        let version = r.read_u32::<LE>().map_err(fmt_err)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let len = r.read_u32::<LE>().map_err(fmt_err)? as usize;
        if len > 1024 {
            return Err(Error::format("model name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(fmt_err)?;
        let name = String::from_utf8(name).map_err(|_| Error::format("model name is not UTF-8"))?;
        let iteration = r.read_u64::<LE>().map_err(fmt_err)?;
        let mut input_shape = [0usize; 3];
        for d in &mut input_shape {
            *d = r.read_u32::<LE>().map_err(fmt_err)? as usize;
        }
        let n_layers = r.read_u32::<LE>().map_err(fmt_err)? as usize;
        if n_layers > 4096 {
            return Err(Error::format("implausible layer count"));
        }
        let layers = (0..n_layers).map(|_| read_kind(r)).collect::<Result<Vec<_>>>()?;
        let recipe = Recipe {
            name,
            input_shape,
            layers,
        };
        let mut model = Model::from_recipe(&recipe, 0).map_err(|e| Error::format(format!("bad layer recipe: {e}")))?;

        let n_params = r.read_u32::<LE>().map_err(fmt_err)? as usize;
        if n_params != model.params().len() {
            return Err(Error::format(format!(
                "recipe has {} parameter tensors, file has {n_params}",
                model.params().len()
            )));
        }
        for p in model.params_mut() {
            let t = read_tensor(r)?;
            if t.shape() != p.shape() {
                return Err(Error::format(format!("parameter {:?} stored as {:?}", p.shape(), t.shape())));
            }
            *p = t;
        }
        let adam = match r.read_u8().map_err(fmt_err)? {
            0 => None,
            1 => {
                let t = r.read_u64::<LE>().map_err(fmt_err)?;
                let mut f = [0f32; 4];
                r.read_f32_into::<LE>(&mut f).map_err(fmt_err)?;
                let config = AdamConfig {
                    lr: f[0],
                    beta1: f[1],
                    beta2: f[2],
                    eps: f[3],
                };
                let n = r.read_u32::<LE>().map_err(fmt_err)? as usize;
                if n != n_params {
                    return Err(Error::format("optimizer state does not match parameters"));
                }
                let m = (0..n).map(|_| read_tensor(r)).collect::<Result<Vec<_>>>()?;
                let v = (0..n).map(|_| read_tensor(r)).collect::<Result<Vec<_>>>()?;
                for (p, (a, b)) in model.params().iter().zip(m.iter().zip(&v)) {
                    if a.shape() != p.shape() || b.shape() != p.shape() {
                        return Err(Error::format("optimizer moment shape mismatch"));
                    }
                }
                Some(AdamState { config, t, m, v })
            }
            f => return Err(Error::format(format!("bad optimizer flag {f}"))),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(fmt_err)? != 0 {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Checkpoint { model, iteration, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}
