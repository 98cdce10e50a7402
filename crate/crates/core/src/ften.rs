//! FTEN binary tensor files.
//!
//! Layout (little-endian): magic `b"FTEN"`, version `u32`, order `d: u32`,
//! `d` shape entries as `u64`, dtype tag `u8` (0 = f64, 1 = f32), then the
//! entries in storage order (mode 0 fastest). f32 files are widened to f64
//! on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MAX_ORDER};

pub const MAGIC: &[u8; 4] = b"FTEN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64 = 0,
    F32 = 1,
}

impl Dtype {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::F32),
            t => Err(Error::decode(format!("unknown dtype tag {t}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

pub fn write_tensor<W: Write>(w: &mut W, t: &DenseTensor, dtype: Dtype) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &n in t.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&[dtype as u8])?;
    match dtype {
        Dtype::F64 => {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in t.data() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::decode("not an FTEN file (bad magic)"));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::decode(format!("unsupported FTEN version {version}")));
    }
    let order = read_u32(r, "order")? as usize;
    if order == 0 || order > MAX_ORDER {
        return Err(Error::decode(format!("tensor order {order} outside 1..={MAX_ORDER}")));
    }
    let mut shape = Vec::with_capacity(order);
    for _ in 0..order {
        let n = read_u64(r, "shape")?;
        if n == 0 {
            return Err(Error::decode("zero-length mode in header"));
        }
        shape.push(usize::try_from(n).map_err(|_| Error::decode("shape entry overflows usize"))?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::decode("tensor size overflows"))?;
    let mut tag = [0u8; 1];
    read_exact(r, &mut tag, "dtype")?;
    let dtype = Dtype::from_tag(tag[0])?;

    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    let expected = len.checked_mul(dtype.width()).ok_or_else(|| Error::decode("tensor size overflows"))?;
    if raw.len() != expected {
        return Err(Error::decode(format!("payload holds {} bytes, header implies {expected}", raw.len())));
    }
    let data = match dtype {
        Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    DenseTensor::new(shape, data)
}

pub fn save(path: impl AsRef<Path>, t: &DenseTensor, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

/// Reads a structured-grid tensor straight from disk (no interpolation).
pub fn load(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::decode(format!("file truncated while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}
