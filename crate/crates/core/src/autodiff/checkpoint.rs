//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//! `"HGMC"`, version `u32`, precision bits `u32` (32 or 64), entry count `u32`,
//! then per entry: name length `u32`, UTF-8 name, rank `u32`, dims `u64 × rank`,
//! values in the header's precision.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"HGMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unsupported precision {0} bits")]
    Precision(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("invalid parameter name")]
    Name,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub precision_bits: u32,
}

pub fn encode_checkpoint<S: Scalar>(params: &ParamSet<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&S::BITS.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn write_checkpoint<S: Scalar>(path: &Path, params: &ParamSet<S>) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint; values are widened to `f64` (exact for both precisions).
pub fn decode_checkpoint(buf: &[u8]) -> Result<(CheckpointHeader, ParamSet<f64>), CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let bits = r.u32()?;
    if bits != 32 && bits != 64 {
        return Err(CheckpointError::Precision(bits));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::Name)?.to_string();
        let rank = r.u32()? as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_, _>>()?;
        let n: usize = shape.iter().product();
        let width = (bits / 8) as usize;
        let raw = r.take(n.checked_mul(width).ok_or(CheckpointError::Truncated)?)?;
        let data: Vec<f64> = raw
            .chunks_exact(width)
            .map(|c| if bits == 32 { f32::read_le(c) as f64 } else { f64::read_le(c) })
            .collect();
        params.insert(name, Tensor::new(shape, data).map_err(|_| CheckpointError::Truncated)?);
    }
    Ok((
        CheckpointHeader {
            version,
            precision_bits: bits,
        },
        params,
    ))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamSet<f64>), CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}
