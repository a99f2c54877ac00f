use std::io::{Read, Write};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.map(|v| U::from_f64(v.to_f64())))
                .collect(),
        }
    }

    /// Replaces every tensor with the same-named, same-shaped tensor of `other`.
    pub fn assign_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::ShapeMismatch(
                "checkpoint parameter names do not match the network".into(),
            ));
        }
        for (name, (dst, src)) in self
            .names
            .iter()
            .zip(self.tensors.iter_mut().zip(&other.tensors))
        {
            if dst.shape != src.shape {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {name}: network {:?} vs checkpoint {:?}",
                    dst.shape, src.shape
                )));
            }
            dst.data.clone_from(&src.data);
        }
        Ok(())
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VPKT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Header `VPKT`, version and parameter count (u32 LE), then per parameter:
/// name length, UTF-8 name, rank, dims (all u32 LE) and f32 LE values.
pub fn write_checkpoint<W: Write>(mut out: W, store: &ParamStore<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * store.numel());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.names.iter().zip(&store.tensors) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ParamStore<f32>> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    let mut cursor = std::io::Cursor::new(raw.as_slice());
    let mut magic = [0u8; 4];
    read_exact(&mut cursor, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_le_u32(&mut cursor)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_le_u32(&mut cursor)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_le_u32(&mut cursor)? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut cursor, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = read_le_u32(&mut cursor)? as usize;
        if rank > 4 {
            return Err(Error::Format(format!("parameter {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_le_u32(&mut cursor)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * n];
        read_exact(&mut cursor, &mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.add(name, Tensor { shape, data });
    }
    if cursor.position() as usize != raw.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(store)
}

fn read_exact(cursor: &mut std::io::Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    cursor
        .read_exact(buf)
        .map_err(|_| Error::Format("checkpoint truncated".into()))
}

fn read_le_u32(cursor: &mut std::io::Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cursor, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
