//! Binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      b"WSCKPT\0\0"
//! version    u32 (currently 1)
//! n_meta     u32, then n_meta × (key: str, value: str)
//! n_tensors  u32, then n_tensors × (name: str, rows: u64, cols: u64, rows·cols × f64)
//! ```
//!
//! where `str` is a `u32` byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WSCKPT\0\0";
pub const VERSION: u32 = 1;
/// Largest tensor accepted on load, in elements.
const MAX_TENSOR_LEN: u64 = 1 << 28;

/// Parameters plus free-form string metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: BTreeMap<String, String>) -> Self {
        Self { meta, tensors: store.iter().map(|(n, t)| (n.to_owned(), t.clone())).collect() }
    }

    /// Copies the saved values into `store`, whose names and shapes must match exactly.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        store.check_layout(self.tensors.iter().map(|(n, t)| (n.as_str(), t)))?;
        for (id, (_, t)) in store.ids().collect::<Vec<_>>().into_iter().zip(&self.tensors) {
            store.get_mut(id).clone_from(t);
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&len_u32(self.meta.len())?.to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        w.write_all(&len_u32(self.tensors.len())?.to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_all(&(t.rows() as u64).to_le_bytes())?;
            w.write_all(&(t.cols() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(8 * t.len());
            for x in t.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Io(format!("unsupported checkpoint version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..read_u32(r)? {
            let k = read_str(r)?;
            let v = read_str(r)?;
            meta.insert(k, v);
        }
        let n = read_u32(r)?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = read_str(r)?;
            let rows = read_u64(r)?;
            let cols = read_u64(r)?;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= MAX_TENSOR_LEN)
                .ok_or_else(|| Error::Io(format!("implausible shape {rows}x{cols} for {name}")))? as usize;
            let (rows, cols) = (rows as usize, cols as usize);
            let mut buf = vec![0u8; 8 * len];
            r.read_exact(&mut buf).map_err(truncated)?;
            let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn truncated(e: std::io::Error) -> Error {
    Error::Io(format!("truncated checkpoint: {e}"))
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Io(format!("length {n} does not fit the checkpoint format")))
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&len_u32(s.len())?.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Io(format!("implausible string length {n}")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|_| Error::Io("checkpoint string is not UTF-8".into()))
}
