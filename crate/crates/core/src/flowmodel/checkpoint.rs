//! Binary checkpoint, little-endian, no padding:
//!
//! ```text
//! "FCK1" | version u32 | D u32 | K_a u32 | K_b u32 | embed_dim u32 | layers u32
//! per layer: rows u32 | cols u32 | rows*cols f32 weights (row-major) | cols f32 biases
//! (K_a*K_b + 1) * embed_dim f32 embedding table (row-major)
//! ```
//!
//! A layer maps `rows` inputs to `cols` outputs.

use std::path::Path;

use super::net::{Dense, NetConfig, VelocityNet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FCK1";
pub const VERSION: u32 = 1;
/// Bytes before the first layer record.
pub const HEADER_LEN: usize = 4 + 6 * 4;

pub fn encode(net: &VelocityNet) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * net.layers().len() + 4 * net.param_count());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        cfg.dim as u32,
        cfg.k_a as u32,
        cfg.k_b as u32,
        cfg.embed_dim as u32,
        net.layers().len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let put = |out: &mut Vec<u8>, xs: &[f64]| {
        for &x in xs {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    };
    for l in net.layers() {
        let (rows, cols) = l.shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        put(&mut out, l.weight());
        put(&mut out, l.bias());
    }
    put(&mut out, net.table());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Format(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}",
                self.pos
            )));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<VelocityNet> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let (dim, k_a, k_b, embed_dim, n_layers) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    if n_layers == 0 {
        return Err(Error::Format("checkpoint has no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let (rows, cols) = (r.u32()?, r.u32()?);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("layer size overflow".into()))?;
        let weight = r.f32s(n)?;
        let bias = r.f32s(cols)?;
        layers.push(Dense::from_parts(rows, cols, weight, bias).map_err(as_format)?);
    }
    let table_len = k_a
        .checked_mul(k_b)
        .and_then(|k| k.checked_add(1))
        .and_then(|k| k.checked_mul(embed_dim))
        .ok_or_else(|| Error::Format("table size overflow".into()))?;
    let table = r.f32s(table_len)?;
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            buf.len() - r.pos
        )));
    }
    let cfg = NetConfig {
        dim,
        k_a,
        k_b,
        embed_dim,
        hidden: Vec::new(),
    };
    let net = VelocityNet::from_parts(cfg, layers, table).map_err(as_format)?;
    if !net.all_finite() {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(net)
}

fn as_format(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Format(m),
        other => other,
    }
}

pub fn save_checkpoint(net: &VelocityNet, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<VelocityNet> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
