//! `AFWT` single-file weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AFWT" | version u32 | count u32
//! count x ( name_len u32 | name utf-8 | rank u32 | extents u64 x rank
//!           | dtype u8 (0 = f32, 1 = f64) | payload, little-endian )
//! crc32 of every preceding byte, u32
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"AFWT";
pub const VERSION: u32 = 1;
/// Highest rank accepted when decoding.
pub const MAX_RANK: usize = 8;

/// A tensor of either supported element type.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bit_eq(&self, other: &Self) -> bool {
        match (self, other) {
            (AnyTensor::F32(a), AnyTensor::F32(b)) => a.bit_eq(b),
            (AnyTensor::F64(a), AnyTensor::F64(b)) => a.bit_eq(b),
            _ => false,
        }
    }

    fn code(&self) -> u8 {
        match self {
            AnyTensor::F32(_) => 0,
            AnyTensor::F64(_) => 1,
        }
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match self {
            AnyTensor::F32(t) => t.data().iter().for_each(|v| v.write_le(out)),
            AnyTensor::F64(t) => t.data().iter().for_each(|v| v.write_le(out)),
        }
    }
}

impl<T: Scalar> From<Tensor<T>> for AnyTensor {
    fn from(t: Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }
}

/// Ordered named tensors, as stored on disk. Names are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightFile {
    pub entries: Vec<(String, AnyTensor)>,
}

fn fmt_err(m: impl Into<String>) -> Error {
    Error::Format(m.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| fmt_err(format!("truncated {what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode_values<T: Scalar>(shape: &[usize], bytes: &[u8]) -> Result<Tensor<T>> {
    let data = bytes.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
    Tensor::new(shape, data).map_err(|e| fmt_err(e.to_string()))
}

impl WeightFile {
    pub fn from_store<T: Scalar>(store: &ParamStore<T>) -> Self {
        let entries = store.iter().map(|(_, p)| (p.name.clone(), AnyTensor::from(p.value.clone()))).collect();
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len()).map_err(|_| fmt_err("too many entries"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.entries {
            if !seen.insert(name.as_str()) {
                return Err(fmt_err(format!("duplicate entry {name}")));
            }
            let len = u32::try_from(name.len()).map_err(|_| fmt_err("name too long"))?;
            if t.shape().len() > MAX_RANK {
                return Err(fmt_err(format!("{name}: rank above {MAX_RANK}")));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(t.code());
            t.write_payload(&mut out);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses and validates a container. Any structural problem, a CRC
    /// failure or unconsumed bytes is a [`Error::Format`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(fmt_err("file too short"));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(fmt_err("checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(fmt_err(format!("unsupported version {version}")));
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..count {
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| fmt_err(format!("entry {i}: name is not utf-8")))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank > MAX_RANK {
                return Err(fmt_err(format!("{name}: rank {rank} above {MAX_RANK}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = r.u64("extent")?;
                shape.push(usize::try_from(d).map_err(|_| fmt_err(format!("{name}: extent {d} too large")))?);
            }
            let dtype = match r.take(1, "dtype")?[0] {
                0 => DType::F32,
                1 => DType::F64,
                c => return Err(fmt_err(format!("{name}: unknown dtype code {c}"))),
            };
            let bytes_needed = shape
                .iter()
                .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
                .filter(|&n| n <= r.remaining())
                .ok_or_else(|| fmt_err(format!("{name}: payload of shape {shape:?} exceeds file")))?;
            let payload = r.take(bytes_needed, "payload")?;
            let t = match dtype {
                DType::F32 => AnyTensor::F32(decode_values(&shape, payload)?),
                DType::F64 => AnyTensor::F64(decode_values(&shape, payload)?),
            };
            if !seen.insert(name.clone()) {
                return Err(fmt_err(format!("duplicate entry {name}")));
            }
            entries.push((name, t));
        }
        if r.remaining() != 0 {
            return Err(fmt_err(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Copies every entry into `store`. Names, shapes and dtypes must match
    /// the store exactly.
    pub fn apply_to<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.entries.len() != store.len() {
            return Err(fmt_err(format!("{} entries for {} parameters", self.entries.len(), store.len())));
        }
        for (name, t) in &self.entries {
            let id = store.id(name).ok_or_else(|| fmt_err(format!("unexpected entry {name}")))?;
            if t.dtype() != T::DTYPE {
                return Err(Error::DType { expected: T::DTYPE.name(), found: t.dtype().name() });
            }
            let value: Tensor<T> = match t {
                AnyTensor::F32(v) => v.cast(),
                AnyTensor::F64(v) => v.cast(),
            };
            store.set(id, value).map_err(|e| fmt_err(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}
