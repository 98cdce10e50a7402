//! FSTK model files.
//!
//! Layout (little-endian):
//!
//! | field          | type                                   |
//! |----------------|----------------------------------------|
//! | magic          | `b"FSTK"`                              |
//! | version        | `u32` (currently 1)                    |
//! | header length  | `u64`                                  |
//! | header         | UTF-8 JSON, `header length` bytes      |
//! | core           | `Π r_k` × `f64`, storage order         |
//! | coefficients   | per mode, per function: `nnz: u32`, then `nnz` × (`index: u32`, `value: f64`) |
//!
//! The JSON header carries the ranks, per-mode domains, per-function basis
//! descriptions and fit diagnostics, and the model metadata. Floats in the
//! header are written in shortest round-trip form, so a decode/encode cycle
//! reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::ften::{read_exact, read_u32, read_u64};
use crate::lasso::SparseFit;
use crate::model::{FunctionalTucker, ModeFunctions, ModelMetadata};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"FSTK";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    ranks: Vec<usize>,
    modes: Vec<ModeHeader>,
    metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModeHeader {
    domain: (f64, f64),
    functions: Vec<FunctionHeader>,
}

#[derive(Serialize, Deserialize)]
struct FunctionHeader {
    basis: BasisSpec,
    nnz: usize,
    chosen_lambda: f64,
    loo_error: f64,
    residual_rel: f64,
}

pub fn write_model<W: Write>(w: &mut W, model: &FunctionalTucker) -> Result<()> {
    let header = Header {
        ranks: model.ranks().to_vec(),
        modes: model
            .modes()
            .iter()
            .map(|m| ModeHeader {
                domain: m.domain,
                functions: m
                    .functions
                    .iter()
                    .map(|f| FunctionHeader {
                        basis: f.basis,
                        nnz: f.nnz(),
                        chosen_lambda: f.chosen_lambda,
                        loo_error: f.loo_error,
                        residual_rel: f.residual_rel,
                    })
                    .collect(),
            })
            .collect(),
        metadata: model.metadata.clone(),
    };
    check_finite(&header)?;
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in model.core().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for mode in model.modes() {
        for f in &mode.functions {
            w.write_all(&(f.coeffs.len() as u32).to_le_bytes())?;
            for &(i, c) in &f.coeffs {
                w.write_all(&i.to_le_bytes())?;
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn check_finite(h: &Header) -> Result<()> {
    let mut vals = vec![h.metadata.tucker_error, h.metadata.residual_ceiling];
    for m in &h.modes {
        vals.extend([m.domain.0, m.domain.1]);
        for f in &m.functions {
            vals.extend([f.chosen_lambda, f.loo_error, f.residual_rel, f.basis.domain.0, f.basis.domain.1]);
        }
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("model header contains non-finite values"));
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<FunctionalTucker> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::decode("not an FSTK file (bad magic)"));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::decode(format!("unsupported FSTK version {version}")));
    }
    let len = read_u64(r, "header length")?;
    if len > 1 << 32 {
        return Err(Error::decode(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact(r, &mut json, "header")?;
    let header: Header = serde_json::from_slice(&json)?;

    let core_len = header
        .ranks
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::decode("core size overflows"))?;
    if core_len > 1 << 32 {
        return Err(Error::decode("implausible core size"));
    }
    let mut core = Vec::with_capacity(core_len);
    let mut b8 = [0u8; 8];
    for _ in 0..core_len {
        read_exact(r, &mut b8, "core")?;
        core.push(f64::from_le_bytes(b8));
    }
    let core = DenseTensor::new(header.ranks.clone(), core).map_err(|e| Error::decode(e.to_string()))?;

    let mut modes = Vec::with_capacity(header.modes.len());
    for mh in header.modes {
        let mut functions = Vec::with_capacity(mh.functions.len());
        for fh in mh.functions {
            let nnz = read_u32(r, "coefficient count")? as usize;
            if nnz != fh.nnz || nnz > fh.basis.dim() {
                return Err(Error::decode(format!(
                    "coefficient count {nnz} disagrees with header ({}) or basis size {}",
                    fh.nnz,
                    fh.basis.dim()
                )));
            }
            let mut coeffs = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let i = read_u32(r, "coefficient index")?;
                read_exact(r, &mut b8, "coefficient value")?;
                coeffs.push((i, f64::from_le_bytes(b8)));
            }
            functions.push(SparseFit {
                basis: fh.basis,
                coeffs,
                chosen_lambda: fh.chosen_lambda,
                loo_error: fh.loo_error,
                residual_rel: fh.residual_rel,
            });
        }
        modes.push(ModeFunctions { domain: mh.domain, functions });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::decode("trailing bytes after model payload"));
    }
    FunctionalTucker::new(core, modes, header.metadata).map_err(|e| Error::decode(e.to_string()))
}

pub fn to_bytes(model: &FunctionalTucker) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    Ok(buf)
}

pub fn serialize(model: &FunctionalTucker, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn deserialize(path: impl AsRef<Path>) -> Result<FunctionalTucker> {
    let mut r = BufReader::new(File::open(path)?);
    read_model(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FlaggedFit;

    fn sample_model() -> FunctionalTucker {
        let f = |basis: BasisSpec, coeffs: Vec<(u32, f64)>| SparseFit {
            basis,
            coeffs,
            chosen_lambda: 0.123456789012345,
            loo_error: 1e-17 / 3.0,
            residual_rel: 0.1 + 0.2,
        };
        let leg = BasisSpec::legendre(4, (0.0, 1.0 / 3.0)).unwrap();
        let wav = BasisSpec::wavelet(2, 1, (-2.0, 7.5)).unwrap();
        let modes = vec![
            ModeFunctions {
                domain: (0.0, 1.0 / 3.0),
                functions: vec![f(leg, vec![(0, 1.5), (3, -2.0 / 7.0)]), f(leg, vec![])],
            },
            ModeFunctions { domain: (-2.0, 7.5), functions: vec![f(wav, vec![(7, std::f64::consts::PI)])] },
        ];
        let core = DenseTensor::new(vec![2, 1], vec![1.0 / 3.0, -1e-300]).unwrap();
        let metadata = ModelMetadata {
            grid_shape: vec![10, 12],
            epsilon: 1e-2,
            tucker_error: 0.0099,
            residual_ceiling: 0.5,
            flagged_fits: vec![FlaggedFit { mode: 0, index: 1, residual_rel: 1.0 }],
            provenance: serde_json::json!({"seed": 7}),
        };
        FunctionalTucker::new(core, modes, metadata).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_model();
        let bytes = to_bytes(&m).unwrap();
        let back = read_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&sample_model()).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(read_model(&mut bad.as_slice()), Err(Error::Decode(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_model(&mut bad.as_slice()), Err(Error::Decode(_))));
        assert!(matches!(read_model(&mut &bytes[..bytes.len() - 3]), Err(Error::Decode(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_model(&mut long.as_slice()), Err(Error::Decode(_))));
        let mut bad_json = bytes;
        bad_json[16] = b'#';
        assert!(matches!(read_model(&mut bad_json.as_slice()), Err(Error::Decode(_))));
    }

    #[test]
    fn nan_metadata_is_rejected_on_write() {
        let mut m = sample_model();
        m.metadata.tucker_error = f64::NAN;
        assert!(to_bytes(&m).is_err());
    }
}
