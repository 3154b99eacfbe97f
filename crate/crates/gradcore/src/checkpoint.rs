//! Flat binary checkpoint of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"GCKP"
//! version u32            (currently 1)
//! count   u32
//! repeat count times:
//!   name_len u32, name bytes (UTF-8)
//!   rank u32, extents u64 × rank
//!   values f64 × product(extents)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{GradError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GCKP";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Entries in file order as `(name, tensor)` pairs.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GradError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(GradError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| GradError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut b = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let t = Tensor::new(shape, data).map_err(|e| GradError::Checkpoint(format!("`{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(store, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Load values into an existing store with matching names and shapes.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let f = std::fs::File::open(path)?;
    let entries = read_checkpoint(std::io::BufReader::new(f))?;
    let mut loaded = ParamStore::new();
    for (name, t) in entries {
        loaded.add(name, t)?;
    }
    store.load_values(&loaded)
}
