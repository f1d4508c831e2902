//! Binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "ZSAE"          4 bytes
//! version u32            = 1
//! dtype   u32            1 = f32, 2 = f64
//! rank    u32
//! shape   rank x u64
//! payload row-major, element type per dtype, little-endian
//! ```
//!
//! Dataset tensors are always `f32`. Model weights use `f64` so that a
//! saved model evaluates identically to the in-memory one.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZSAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dtype: DType,
    pub shape: Vec<u64>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(dtype: DType, shape: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        let expected =
            element_count(&shape).ok_or_else(|| Error::invalid("tensor shape overflows usize"))?;
        if expected != values.len() {
            return Err(Error::mismatch(
                "tensor payload length",
                expected,
                values.len(),
            ));
        }
        Ok(Self {
            dtype,
            shape,
            values,
        })
    }

    /// Row-major matrix view; fails unless the tensor has rank 2.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r as usize, *c as usize)),
            _ => None,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let cols = self.shape.last().copied().unwrap_or(1).max(1) as usize;
        self.values.chunks(cols)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.shape.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.dtype.code().to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for dim in &self.shape {
            out.extend_from_slice(&dim.to_le_bytes());
        }
        match self.dtype {
            DType::F32 => {
                for v in &self.values {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
            DType::F64 => {
                for v in &self.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses an encoded tensor. `origin` only labels error messages.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedHeader {
            path: origin.to_path_buf(),
            reason,
        };
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor
            .take(4)
            .ok_or_else(|| malformed("truncated magic".into()))?;
        if magic != MAGIC {
            return Err(malformed(format!("bad magic {magic:?}")));
        }
        let version = cursor
            .u32()
            .ok_or_else(|| malformed("truncated version".into()))?;
        if version != FORMAT_VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let code = cursor
            .u32()
            .ok_or_else(|| malformed("truncated dtype".into()))?;
        let dtype = DType::from_code(code)
            .ok_or_else(|| malformed(format!("unknown dtype code {code}")))?;
        let rank = cursor
            .u32()
            .ok_or_else(|| malformed("truncated rank".into()))?;
        let mut shape = Vec::with_capacity(rank.min(16) as usize);
        for _ in 0..rank {
            shape.push(
                cursor
                    .u64()
                    .ok_or_else(|| malformed("truncated shape".into()))?,
            );
        }
        let count =
            element_count(&shape).ok_or_else(|| malformed("shape overflows usize".into()))?;
        let payload = &bytes[cursor.pos..];
        let expected = count
            .checked_mul(dtype.width())
            .ok_or_else(|| malformed("shape overflows usize".into()))?;
        if payload.len() != expected {
            return Err(malformed(format!(
                "payload is {} bytes, shape {:?} needs {}",
                payload.len(),
                shape,
                expected
            )));
        }
        let values = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        };
        Ok(Self {
            dtype,
            shape,
            values,
        })
    }
}

fn element_count(shape: &[u64]) -> Option<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}
