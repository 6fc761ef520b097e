//! Parameter checkpoints.
//!
//! ```text
//! magic    b"GCKP"
//! version  u16
//! count    u32
//! entries  count x (name_len u16, name, rank u8, dims u32 x rank, values f64 x prod(dims))
//! crc32    u32 over every preceding byte
//! ```
//!
//! Entries are sorted by name so the byte layout is independent of insertion order.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> Result<Vec<u8>> {
    let mut entries: Vec<_> = store.iter().collect();
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for p in entries {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("parameter name too long: {}", p.name)))?;
        let rank = u8::try_from(p.value.rank()).map_err(|_| Error::Format(format!("rank of {} exceeds 255", p.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &d in &p.value.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.value.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("checkpoint ends at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    if bytes.len() < 14 {
        return Err(Error::Truncated("checkpoint shorter than its fixed header".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut c = Cursor { bytes: body, at: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_owned();
        let rank = c.take(1)?[0] as usize;
        let shape: Vec<usize> = (0..rank)
            .map(|_| c.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize))
            .collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let data = c
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if store.find(&name).is_some() {
            return Err(Error::Format(format!("duplicate parameter {name}")));
        }
        store.add(name, Tensor::new(shape, data)?);
    }
    if c.at != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(store)
}

/// Writes the checkpoint and returns its size in bytes.
pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = encode_checkpoint(store)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    decode_checkpoint(&fs::read(path)?)
}
