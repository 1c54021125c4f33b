//! Binary checkpoint format.
//!
//! ```text
//! b"DACOOP1"
//! u32 method length, method bytes (utf-8)
//! u32 tensor count
//!   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank]
//! f64 data for each tensor in manifest order, row-major
//! u64 FNV-1a hash of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::{Architecture, NetworkParams, LAYER_NAMES};

pub const MAGIC: &[u8; 7] = b"DACOOP1";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "tensor `{name}` has shape {shape:?} but {} values",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub method: String,
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("string is not utf-8".into()))
    }
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_str(&mut out, &self.method);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            push_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let hash = fnv1a64(&out);
        out.extend_from_slice(&hash.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("missing DACOOP1 header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let actual = fnv1a64(body);
        if stored != actual {
            return Err(Error::Checkpoint(format!(
                "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
            )));
        }
        let mut r = Reader {
            bytes: body,
            pos: MAGIC.len(),
        };
        let method = r.string()?;
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(manifest.len());
        for (name, shape) in manifest {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { method, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Network weights as `<layer>.weight` (inputs x outputs) and
    /// `<layer>.bias` tensors.
    pub fn from_network(method: &str, params: &NetworkParams) -> Self {
        let mut tensors = Vec::with_capacity(12);
        for spec in params.arch.layers() {
            tensors.push(Tensor {
                name: format!("{}.weight", spec.name),
                shape: vec![spec.inputs, spec.outputs],
                data: params.data[spec.weight_range()].to_vec(),
            });
            tensors.push(Tensor {
                name: format!("{}.bias", spec.name),
                shape: vec![spec.outputs],
                data: params.data[spec.bias_range()].to_vec(),
            });
        }
        Self {
            method: method.to_string(),
            tensors,
        }
    }

    pub fn network(&self) -> Result<NetworkParams> {
        let dim = |name: &str, axis: usize| -> Result<usize> {
            self.tensor(name)
                .and_then(|t| t.shape.get(axis).copied())
                .ok_or_else(|| Error::Incompatible(format!("checkpoint has no tensor `{name}`")))
        };
        let arch = Architecture {
            embed: dim("embed.weight", 1)?,
            trunk: dim("trunk.weight", 1)?,
            stream: dim("adv_hidden.weight", 1)?,
            actions: dim("adv_out.weight", 1)?,
        };
        arch.validate()?;
        let mut params = NetworkParams::zeros(arch);
        for (spec, name) in arch.layers().iter().zip(LAYER_NAMES) {
            for (suffix, shape, range) in [
                ("weight", vec![spec.inputs, spec.outputs], spec.weight_range()),
                ("bias", vec![spec.outputs], spec.bias_range()),
            ] {
                let key = format!("{name}.{suffix}");
                let t = self
                    .tensor(&key)
                    .ok_or_else(|| Error::Incompatible(format!("checkpoint has no tensor `{key}`")))?;
                if t.shape != shape {
                    return Err(Error::Incompatible(format!(
                        "tensor `{key}` has shape {:?}, expected {shape:?}",
                        t.shape
                    )));
                }
                params.data[range].copy_from_slice(&t.data);
            }
        }
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite weights".into()));
        }
        Ok(params)
    }

    /// FNV-1a hash of the serialized form; equal for bitwise-equal contents.
    pub fn checksum(&self) -> u64 {
        let bytes = self.to_bytes();
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"))
    }
}
