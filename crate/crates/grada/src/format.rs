//! Versioned binary container for named f64 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "GRDA" | u32 version = 1 | u32 tensor count
//! per tensor: u16 name length | name bytes (UTF-8)
//!             u8 dtype (0 = f64) | u8 ndim | u32 dims…
//!             row-major f64 payload
//! ```
//!
//! Tensors are written in name order, so a given map always serializes to
//! the same bytes. Checkpoints and dataset sample files both use this
//! container.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"GRDA";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::Format(format!("too many tensors: {}", tensors.len())))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[DTYPE_F64])?;
        let ndim = u8::try_from(tensor.shape().len())
            .map_err(|_| Error::Format(format!("{name}: too many dimensions")))?;
        w.write_all(&[ndim])?;
        for &dim in tensor.shape() {
            let d = u32::try_from(dim)
                .map_err(|_| Error::Format(format!("{name}: extent {dim} exceeds u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected {:02x?} ({})",
            magic,
            MAGIC,
            path.display()
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let count = read_u32(&mut r, "tensor count")?;

    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u16(&mut r, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;

        let mut dtype = [0u8; 1];
        read_exact(&mut r, &mut dtype, "dtype")?;
        if dtype[0] != DTYPE_F64 {
            return Err(Error::Format(format!("{name}: unsupported dtype code {}", dtype[0])));
        }
        let mut ndim = [0u8; 1];
        read_exact(&mut r, &mut ndim, "ndim")?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        let mut numel: usize = 1;
        for _ in 0..ndim[0] {
            let dim = read_u32(&mut r, "dimension")? as usize;
            if dim == 0 {
                return Err(Error::Format(format!("{name}: zero extent")));
            }
            numel = numel
                .checked_mul(dim)
                .ok_or_else(|| Error::Format(format!("{name}: element count overflow")))?;
            shape.push(dim);
        }
        let mut data = vec![0.0f64; numel];
        let mut buf = [0u8; 8];
        for v in &mut data {
            read_exact(&mut r, &mut buf, "payload")?;
            *v = f64::from_le_bytes(buf);
        }
        if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(Error::Format(format!("duplicate tensor name {name}")));
        }
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(tensors)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(r: &mut impl Read, what: &str) -> Result<u16> {
    let mut buf = [0u8; 2];
    read_exact(r, &mut buf, what)?;
    Ok(u16::from_le_bytes(buf))
}
