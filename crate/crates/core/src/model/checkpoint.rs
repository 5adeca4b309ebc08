//! `WFCK` checkpoint files.
//!
//! Layout (little-endian): magic `WFCK`, version `u32`, the config block
//! (`enc_depth, enc_width, enc_heads, dec_depth, dec_width, dec_heads,
//! t_patch, f_patch, s_patch` as `u32`, then `mlp_ratio` as `f64`), then one
//! record per tensor in canonical order: name length `u16`, name bytes,
//! rank `u8`, dims `u32 × rank`, `f32` data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, Parameters};
use crate::channel::write_atomic;
use crate::error::{Result, WifoError};
use crate::num::Real;
use crate::patch::PatchSpec;

const MAGIC: &[u8; 4] = b"WFCK";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Real, W: Write>(w: &mut W, params: &Parameters<T>) -> Result<()> {
    let c = &params.config;
    let mut buf = Vec::with_capacity(64 + params.num_scalars() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.enc_depth,
        c.enc_width,
        c.enc_heads,
        c.dec_depth,
        c.dec_width,
        c.dec_heads,
        c.patch.t_patch,
        c.patch.f_patch,
        c.patch.s_patch,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.mlp_ratio.to_le_bytes());
    params.for_each_tensor(|name, shape, _, data| {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    });
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint<T: Real>(path: &Path, params: &Parameters<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params)?;
    write_atomic(path, &buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| WifoError::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_checkpoint<T: Real, R: Read>(r: &mut R) -> Result<Parameters<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(WifoError::Format("bad magic, expected WFCK".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(WifoError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 9];
    for d in dims.iter_mut() {
        *d = cur.u32()? as usize;
    }
    let mlp_ratio = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let config = ModelConfig {
        enc_depth: dims[0],
        enc_width: dims[1],
        enc_heads: dims[2],
        dec_depth: dims[3],
        dec_width: dims[4],
        dec_heads: dims[5],
        patch: PatchSpec::new(dims[6], dims[7], dims[8]),
        mlp_ratio,
    };
    config.validate()?;

    let mut records: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    while cur.pos < bytes.len() {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| WifoError::Format("tensor name is not UTF-8".into()))?;
        let rank = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = cur
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if records.insert(name.clone(), (shape, data)).is_some() {
            return Err(WifoError::Format(format!("duplicate tensor `{name}`")));
        }
    }

    let mut params = Parameters::<T>::zeros(&config);
    let mut err = None;
    params.for_each_tensor_mut(|name, shape, _, dst| {
        if err.is_some() {
            return;
        }
        match records.remove(name) {
            None => err = Some(WifoError::Format(format!("missing tensor `{name}`"))),
            Some((s, _)) if s != shape => {
                err = Some(WifoError::Format(format!("tensor `{name}` has shape {s:?}, config expects {shape:?}")))
            }
            Some((_, data)) => {
                for (d, v) in dst.iter_mut().zip(data) {
                    *d = T::lit(v as f64);
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(name) = records.keys().next() {
        return Err(WifoError::Format(format!("unexpected tensor `{name}`")));
    }
    if !params.all_finite() {
        return Err(WifoError::NonFinite("checkpoint contains non-finite weights".into()));
    }
    Ok(params)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Parameters<T>> {
    let mut f = std::fs::File::open(path)?;
    read_checkpoint(&mut f)
}
