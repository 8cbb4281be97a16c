//! Binary checkpoint format.
//!
//! ```text
//! "VGAN"                       4 bytes
//! version                      u32
//! tensor count                 u32
//! per tensor:
//!   name length, name          u32, UTF-8 bytes
//!   rank, dims                 u32, u32 x rank
//!   values                     f32 x product(dims)
//! config length, config        u32, UTF-8 bytes
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::tensor::{ParamSet, Real, Tensor};

use super::DataError;

pub const MAGIC: &[u8; 4] = b"VGAN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    /// Rendered `key = value` configuration of the saved models.
    pub config: String,
}

impl Checkpoint {
    pub fn new(config: impl Into<String>) -> Self {
        Self {
            tensors: Vec::new(),
            config: config.into(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.push((name.into(), tensor));
    }

    /// Appends every parameter of `params` under `prefix`.
    pub fn push_params<T: Real>(&mut self, prefix: &str, params: &ParamSet<T>) {
        for p in params.iter() {
            self.push(format!("{prefix}{}", p.name), p.value().cast());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrites every parameter in `params` from `prefix`-named tensors.
    pub fn load_params<T: Real>(&self, prefix: &str, params: &mut ParamSet<T>) -> Result<(), DataError> {
        for p in params.iter_mut() {
            let name = format!("{prefix}{}", p.name);
            let t = self
                .get(&name)
                .ok_or_else(|| DataError::Invalid(format!("checkpoint is missing tensor `{name}`")))?;
            if t.shape() != p.value().shape() {
                return Err(DataError::Invalid(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.value().shape()
                )));
            }
            *p.value_mut() = t.cast();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(DataError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(DataError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or(DataError::Truncated { offset: r.pos })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| DataError::Invalid(e.to_string()))?;
            tensors.push((name, t));
        }
        let config = r.string()?;
        if r.pos != bytes.len() {
            return Err(DataError::Invalid(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { tensors, config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DataError::Truncated { offset: self.pos }),
        }
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, DataError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|e| DataError::Invalid(format!("bad UTF-8 in checkpoint: {e}")))
    }
}
