//! Point-cloud files.
//!
//! CSV: a header row `y1,...,yd,value`, then one sample per row.
//!
//! FPCL (little-endian): magic `b"FPCL"`, version `u32`, dimension `d: u32`,
//! point count `Q: u64`, dtype tag `u8` (0 = f64, 1 = f32), the `Q × d`
//! coordinates point-major, then the `Q` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::ften::{read_exact, read_u32, read_u64, Dtype};
use crate::tensor::MAX_ORDER;

pub const FPCL_MAGIC: &[u8; 4] = b"FPCL";
pub const FPCL_VERSION: u32 = 1;

pub fn write_csv<W: Write>(w: W, pc: &PointCloud) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=pc.dim()).map(|k| format!("y{k}")).collect();
    header.push("value".into());
    out.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(pc.dim() + 1);
    for q in 0..pc.len() {
        row.clear();
        row.extend(pc.point(q).iter().map(|c| c.to_string()));
        row.push(pc.values()[q].to_string());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<PointCloud> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let cols = rdr.headers().map_err(csv_err)?.len();
    if cols < 2 {
        return Err(Error::decode(format!("point CSV needs at least 2 columns, header has {cols}")));
    }
    let d = cols - 1;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != cols {
            return Err(Error::decode(format!("row {}: {} fields, expected {cols}", line + 1, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 =
                field.parse().map_err(|_| Error::decode(format!("row {}: cannot parse {field:?}", line + 1)))?;
            if j < d {
                points.push(v);
            } else {
                values.push(v);
            }
        }
    }
    PointCloud::new(d, points, values).map_err(|e| Error::decode(e.to_string()))
}

/// Coordinates listed in a CSV with a header and either `d` columns or
/// `d + 1` (coordinates then a reference value). May be empty.
pub fn read_point_list<R: Read>(r: R, d: usize) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let cols = rdr.headers().map_err(csv_err)?.len();
    if cols != d && cols != d + 1 {
        return Err(Error::decode(format!("point list has {cols} columns, expected {d} or {}", d + 1)));
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 =
                field.parse().map_err(|_| Error::decode(format!("row {}: cannot parse {field:?}", line + 1)))?;
            if j < d {
                points.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Ok((points, (cols == d + 1).then_some(values)))
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::decode(format!("CSV: {e}"))
    }
}

pub fn write_fpcl<W: Write>(w: &mut W, pc: &PointCloud, dtype: Dtype) -> Result<()> {
    w.write_all(FPCL_MAGIC)?;
    w.write_all(&FPCL_VERSION.to_le_bytes())?;
    w.write_all(&(pc.dim() as u32).to_le_bytes())?;
    w.write_all(&(pc.len() as u64).to_le_bytes())?;
    w.write_all(&[dtype as u8])?;
    for v in pc.points().iter().chain(pc.values()) {
        match dtype {
            Dtype::F64 => w.write_all(&v.to_le_bytes())?,
            Dtype::F32 => w.write_all(&(*v as f32).to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn read_fpcl<R: Read>(r: &mut R) -> Result<PointCloud> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != FPCL_MAGIC {
        return Err(Error::decode("not an FPCL file (bad magic)"));
    }
    let version = read_u32(r, "version")?;
    if version != FPCL_VERSION {
        return Err(Error::decode(format!("unsupported FPCL version {version}")));
    }
    let d = read_u32(r, "dimension")? as usize;
    if d == 0 || d > MAX_ORDER {
        return Err(Error::decode(format!("point dimension {d} outside 1..={MAX_ORDER}")));
    }
    let q = usize::try_from(read_u64(r, "point count")?).map_err(|_| Error::decode("point count overflows"))?;
    let mut tag = [0u8; 1];
    read_exact(r, &mut tag, "dtype")?;
    let width = match tag[0] {
        0 => 8,
        1 => 4,
        t => return Err(Error::decode(format!("unknown dtype tag {t}"))),
    };
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    let expected = q
        .checked_mul(d + 1)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::decode("point cloud size overflows"))?;
    if raw.len() != expected {
        return Err(Error::decode(format!("payload holds {} bytes, header implies {expected}", raw.len())));
    }
    let mut all: Vec<f64> = if width == 8 {
        raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    } else {
        raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
    };
    let values = all.split_off(q * d);
    PointCloud::new(d, all, values).map_err(|e| Error::decode(e.to_string()))
}

/// Loads a point cloud, choosing the format from the extension (`.csv`) or
/// else the FPCL magic.
pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_csv(file)
    } else {
        let mut file = file;
        read_fpcl(&mut file)
    }
}

pub fn save_point_cloud(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(&mut w, pc)?;
    } else {
        write_fpcl(&mut w, pc, Dtype::F64)?;
    }
    w.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
