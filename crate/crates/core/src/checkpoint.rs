//! Binary checkpoints.
//!
//! Little-endian layout: magic `IMPN`, version `u32`, architecture tag `u8`,
//! tensor count `u32`, then per tensor: name length `u16`, UTF-8 name, rank
//! `u8`, `rank` dims as `u32`, and the row-major `f32` payload. Tensors are
//! written in name order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Architecture, ParamSet};
use crate::tensor::{Real, Tensor};

pub const MAGIC: [u8; 4] = *b"IMPN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub tensors: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new<T: Real>(architecture: Architecture, tensors: &ParamSet<T>) -> Self {
        Checkpoint {
            architecture,
            tensors: tensors.cast(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.tensors.n_values());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.architecture.tag());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.tensors.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// `path` is only used in diagnostics.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, at: 0, path };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.malformed("magic", "not a checkpoint (expected IMPN)"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                detail: format!("checkpoint version {version}, expected {VERSION}"),
            });
        }
        let tag = r.take(1, "architecture")?[0];
        let architecture = Architecture::from_tag(tag)
            .ok_or_else(|| r.malformed("architecture", &format!("unknown tag {tag}")))?;
        let count = r.u32("tensor count")?;
        let mut tensors = ParamSet::new();
        for i in 0..count {
            let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| r.malformed("name", &format!("tensor {i} name is not UTF-8")))?
                .to_string();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dims")? as usize);
            }
            let n: usize = shape.iter().product();
            let payload = r.take(n * 4, &format!("payload of {name}"))?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| r.malformed(&name, &e.to_string()))?;
            if tensors.contains(&name) {
                return Err(r.malformed(&name, "duplicate tensor name"));
            }
            tensors.insert(name, t);
        }
        if r.at != bytes.len() {
            return Err(r.malformed("trailer", &format!("{} unexpected trailing bytes", bytes.len() - r.at)));
        }
        Ok(Checkpoint { architecture, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, field: &str, detail: &str) -> Error {
        Error::Malformed {
            path: self.path.into(),
            detail: format!("{field}: {detail}"),
        }
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(self.malformed(field, &format!("truncated at byte {}", self.at))),
        }
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }
}
