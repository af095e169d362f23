//! The `SFT1` tensor file format and a named-tensor bundle built on it.
//!
//! `SFT1` layout (all integers little-endian):
//!
//! ```text
//! "SFT1" | rank: u32 | dims: rank × u32 | payload: prod(dims) × f32, row-major
//! ```
//!
//! A bundle is `"SFTB" | count: u32 | count × (name_len: u32 | name: utf-8 | SFT1 tensor)`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"SFT1";
pub const BUNDLE_MAGIC: &[u8; 4] = b"SFTB";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor dims {dims:?} hold {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|v| *v as f32).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        write_u32(w, self.dims.len())?;
        for d in &self.dims {
            write_u32(w, *d)?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Parse(format!("bad tensor magic {magic:?}")));
        }
        let rank = read_u32(r)?;
        if rank > 16 {
            return Err(Error::Parse(format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::Parse("tensor size overflows".into()))?;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * (self.dims.len() + self.data.len()));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let t = Self::read_from(&mut r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Parse("trailing bytes after tensor payload".into()));
        }
        Ok(t)
    }
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Parse("truncated tensor data".into())
    } else {
        Error::Io(e)
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_bundle<W: Write>(w: &mut W, tensors: &[(String, Tensor)]) -> Result<()> {
    w.write_all(BUNDLE_MAGIC)?;
    write_u32(w, tensors.len())?;
    for (name, t) in tensors {
        write_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        t.write_to(w)?;
    }
    Ok(())
}

pub fn read_bundle<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != BUNDLE_MAGIC {
        return Err(Error::Parse(format!("bad bundle magic {magic:?}")));
    }
    let count = read_u32(r)?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = read_u32(r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|e| Error::Parse(e.to_string()))?;
        out.push((name, Tensor::read_from(r)?));
    }
    Ok(out)
}

pub fn save_bundle(path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bundle(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<Vec<(String, Tensor)>> {
    read_bundle(&mut BufReader::new(File::open(path)?))
}
