//! Checkpoint file layout, all integers and reals little-endian:
//!
//! ```text
//! "WVCK"  u32 version
//! u32 config length, config text (UTF-8 key = value lines)
//! u32 block count
//! per block: u16 name length, name, u32 rank, u32 extents…, f64 values…
//! ```

use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WVCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_len(&mut out, self.config_text.len())?;
        out.extend_from_slice(self.config_text.as_bytes());
        put_len(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Precondition(format!("tensor name `{name}` too long")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            put_len(&mut out, t.shape.len())?;
            for &s in &t.shape {
                put_len(&mut out, s)?;
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(r.bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.bad(&format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| r.bad("config block is not UTF-8"))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| r.bad("tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| r.bad("tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(r.bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint { config_text, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes, &path.display().to_string())
    }
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Precondition(format!("length {n} exceeds the u32 range")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn bad(&self, reason: &str) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: 0,
            reason: format!("{reason} (byte {})", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
