//! Relevance-trace bundles.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    8 bytes  "LRPRELV\0"
//! version  u32      1
//! class    u32
//! rule     u32 length + UTF-8 (e.g. "eps:1e-6")
//! plan     u32 length + UTF-8 (e.g. "0=amp:0.7x2.0,2=amp:0.7x2.0")
//! maps     u32 count, then per map, from R⁽ᴸ⁾ down to R⁽⁰⁾:
//!            u32 layer index, u32 ndim, ndim × u32 extents, f32 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::lrp::{RelevanceMap, RelevanceTrace};
use crate::nn::checkpoint::{read_tensor, write_tensor};

pub const MAGIC: &[u8; 8] = b"LRPRELV\0";
pub const VERSION: u32 = 1;

/// The contents of a bundle file; rule and plan are kept in their textual form.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub class_index: usize,
    pub rule: String,
    pub plan: String,
    pub maps: Vec<RelevanceMap>,
}

impl From<&RelevanceTrace> for Bundle {
    fn from(t: &RelevanceTrace) -> Self {
        Bundle {
            class_index: t.class_index,
            rule: t.rule.to_string(),
            plan: t.plan.to_string(),
            maps: t.maps.clone(),
        }
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn eof(e: std::io::Error) -> Error {
    Error::format(format!("bad relevance bundle: {e}"))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LE>().map_err(eof)? as usize;
    if n > 1 << 16 {
        return Err(Error::format("bundle string too long"));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(eof)?;
    String::from_utf8(b).map_err(|_| Error::format("bundle string is not UTF-8"))
}

impl Bundle {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.class_index as u32)?;
        write_str(w, &self.rule)?;
        write_str(w, &self.plan)?;
        w.write_u32::<LE>(self.maps.len() as u32)?;
        for m in &self.maps {
            w.write_u32::<LE>(m.layer as u32)?;
            write_tensor(w, &m.values)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(Error::format("not a relevance bundle (bad magic)"));
        }
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported bundle version {version}")));
        }
        let class_index = r.read_u32::<LE>().map_err(eof)? as usize;
        let rule = read_str(r)?;
        let plan = read_str(r)?;
        let n = r.read_u32::<LE>().map_err(eof)? as usize;
        if n > 4097 {
            return Err(Error::format("implausible map count"));
        }
        let mut maps = Vec::with_capacity(n);
        for _ in 0..n {
            let layer = r.read_u32::<LE>().map_err(eof)? as usize;
            maps.push(RelevanceMap {
                layer,
                values: read_tensor(r)?,
            });
        }
        Ok(Bundle {
            class_index,
            rule,
            plan,
            maps,
        })
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
