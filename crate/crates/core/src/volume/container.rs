//! The "ADCT" tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"ADCT"
//! version  u32 = 1
//! count    u32
//! count x {
//!     name_len u32, name (UTF-8, name_len bytes)
//!     dtype    u32   (1 = f32, 2 = f64)
//!     rank     u32
//!     dims     rank x u64 (each > 0)
//!     payload  product(dims) values, little-endian, row-major
//! }
//! ```
//!
//! Rank 0 denotes a scalar with one value.

use std::collections::HashSet;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ADCT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const DTYPE_F64: u32 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("container truncated at byte {0}")]
    Truncated(usize),
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("bad container magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("tensor {name:?}: invalid shape {shape:?}")]
    InvalidShape { name: String, shape: Vec<u64> },
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("tensor {name:?}: payload has {got} values, shape implies {expected}")]
    PayloadMismatch { name: String, expected: usize, got: usize },
    #[error("tensor {0:?} not found")]
    Missing(String),
    #[error("tensor {name:?} has dtype {got}, expected {expected}")]
    WrongDtype { name: String, expected: &'static str, got: &'static str },
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
        }
    }
}

// Equality is bitwise so NaN payloads compare equal to themselves.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::F64(a), TensorData::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl TensorRecord {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), shape, data: TensorData::F32(data) }
    }

    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), shape, data: TensorData::F64(data) }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn as_f32(&self) -> Result<&[f32], ContainerError> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            other => Err(ContainerError::WrongDtype {
                name: self.name.clone(),
                expected: "f32",
                got: other.dtype_name(),
            }),
        }
    }

    pub fn as_f64(&self) -> Result<&[f64], ContainerError> {
        match &self.data {
            TensorData::F64(v) => Ok(v),
            other => Err(ContainerError::WrongDtype {
                name: self.name.clone(),
                expected: "f64",
                got: other.dtype_name(),
            }),
        }
    }
}

/// Serializes records. Fails on duplicate names, zero dims or payload/shape mismatch.
pub fn write_container(records: &[TensorRecord]) -> Result<Vec<u8>, ContainerError> {
    let mut seen = HashSet::new();
    let payload_bytes: usize = records
        .iter()
        .map(|r| match r.data {
            TensorData::F32(_) => 4 * r.data.len(),
            TensorData::F64(_) => 8 * r.data.len(),
        })
        .sum();
    let mut out = Vec::with_capacity(12 + payload_bytes + 64 * records.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        if !seen.insert(r.name.as_str()) {
            return Err(ContainerError::DuplicateName(r.name.clone()));
        }
        if r.shape.contains(&0) {
            return Err(ContainerError::InvalidShape {
                name: r.name.clone(),
                shape: r.shape.iter().map(|&d| d as u64).collect(),
            });
        }
        if r.numel() != r.data.len() {
            return Err(ContainerError::PayloadMismatch {
                name: r.name.clone(),
                expected: r.numel(),
                got: r.data.len(),
            });
        }
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        let dtype = match r.data {
            TensorData::F32(_) => DTYPE_F32,
            TensorData::F64(_) => DTYPE_F64,
        };
        out.extend_from_slice(&dtype.to_le_bytes());
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &r.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ContainerError::Truncated(self.bytes.len())),
        }
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_container(bytes: &[u8]) -> Result<Vec<TensorRecord>, ContainerError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    cur.take(4)?;
    let version = cur.u32()?;
    if version != VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let count = cur.u32()? as usize;
    let mut seen = HashSet::new();
    // each record needs at least 12 bytes; cap the preallocation accordingly
    let mut records = Vec::with_capacity(count.min(bytes.len() / 12));
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| ContainerError::BadName)?
            .to_owned();
        let dtype = cur.u32()?;
        let width = match dtype {
            DTYPE_F32 => 4,
            DTYPE_F64 => 8,
            other => return Err(ContainerError::UnknownDtype(other)),
        };
        let rank = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(64));
        for _ in 0..rank {
            dims.push(cur.u64()?);
        }
        let numel = dims
            .iter()
            .try_fold(1u64, |acc, &d| if d == 0 { None } else { acc.checked_mul(d) })
            .and_then(|n| usize::try_from(n).ok())
            .filter(|n| n.checked_mul(width).is_some());
        let Some(numel) = numel else {
            return Err(ContainerError::InvalidShape { name, shape: dims });
        };
        let raw = cur.take(numel * width)?;
        let data = if width == 4 {
            TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        } else {
            TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        if !seen.insert(name.clone()) {
            return Err(ContainerError::DuplicateName(name));
        }
        records.push(TensorRecord { name, shape: dims.iter().map(|&d| d as usize).collect(), data });
    }
    if cur.pos != bytes.len() {
        return Err(ContainerError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(records)
}

/// Looks up a record by name.
pub fn find<'a>(records: &'a [TensorRecord], name: &str) -> Result<&'a TensorRecord, ContainerError> {
    records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| ContainerError::Missing(name.to_owned()))
}
