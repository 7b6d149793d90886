//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "MRPO" | version u32 | config_len u32 | config (key=value UTF-8)
//! | n_tensors u32 | per tensor: name_len u32, name, rank u32, dims u32×rank, f32×len
//! ```

use std::path::Path;

use super::config::RegressorConfig;
use super::params::ModelParams;
use crate::config::KeyValues;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRPO";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = params.config.to_kv_string();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&(params.layout.tensors.len() as u32).to_le_bytes());
    for t in &params.layout.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &params.data[t.range()] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::TruncatedFile(self.what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Parse(format!("{}: invalid UTF-8", self.what)))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "checkpoint",
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic("checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let mut kv = KeyValues::parse(r.string()?)?;
    let config = RegressorConfig::from_kv(&mut kv)?;
    kv.finish()?;
    let mut params = ModelParams::zeros(config)?;
    let count = r.u32()? as usize;
    if count != params.layout.tensors.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint has {count} tensors, config expects {}",
            params.layout.tensors.len()
        )));
    }
    for t in params.layout.tensors.clone() {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != t.name || dims != t.dims {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name} {dims:?} does not match expected {} {:?}",
                t.name, t.dims
            )));
        }
        let raw = r.take(4 * t.len())?;
        for (x, chunk) in params.data[t.range()].iter_mut().zip(raw.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!("tensor {name}")));
            }
            *x = v as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after checkpoint".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
