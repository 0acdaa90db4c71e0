//! Binary checkpoint container. All integers little-endian.
//!
//! ```text
//! magic        8 bytes   "SCECKPT\0"
//! format       u32       1
//! version tag  u32 len, UTF-8 bytes
//! seed         u64
//! attributes   u32 count, then per entry (sorted by key):
//!                u32 len, key bytes, u32 len, value bytes
//! tensors      u32 count, then per tensor (sorted by name):
//!                u32 len, name bytes, u32 ndim, ndim x u64 dims,
//!                prod(dims) x f64
//! ```
//!
//! Nothing follows the last tensor; trailing bytes are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{EncoderError, ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"SCECKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub version: String,
    pub seed: u64,
    pub attributes: BTreeMap<String, String>,
    pub tensors: ParamSet,
}

impl Checkpoint {
    pub fn attr(&self, key: &str) -> Result<&str, EncoderError> {
        self.attributes
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| EncoderError::Checkpoint(format!("missing attribute {key}")))
    }

    pub fn attr_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, EncoderError> {
        let raw = self.attr(key)?;
        raw.parse()
            .map_err(|_| EncoderError::Checkpoint(format!("attribute {key}={raw:?} does not parse")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.version);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.attributes.len() as u32).to_le_bytes());
        for (k, v) in &self.attributes {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.tensors.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(EncoderError::Checkpoint("bad magic".into()));
        }
        let format = r.u32()?;
        if format != FORMAT_VERSION {
            return Err(EncoderError::Checkpoint(format!("unsupported format {format}")));
        }
        let version = r.string()?;
        let seed = r.u64()?;
        let mut attributes = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            attributes.insert(k, v);
        }
        let mut tensors = ParamSet::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64()?).map_err(|_| EncoderError::Checkpoint("dim overflow".into()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| EncoderError::Checkpoint(format!("tensor {name} too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| EncoderError::Checkpoint("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.insert(name, Tensor::from_vec(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(EncoderError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            version,
            seed,
            attributes,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| EncoderError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| EncoderError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EncoderError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, EncoderError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, EncoderError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| EncoderError::Checkpoint("invalid UTF-8".into()))
    }
}
