//! End-to-end compression: subsample → interpolate to a grid → ST-HOSVD →
//! sparse functional fits → model, with a held-out validation error.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::ingest::{interpolate_to_grid, split_indices, Coverage, IdwOptions, PointCloud, StructuredGrid};
use crate::model::{assemble, AssembleOptions, FunctionalTucker, StorageCost, DEFAULT_RESIDUAL_CEILING};
use crate::sthosvd::{sthosvd_ordered, ModeOrder};
use crate::tensor::{norm2, DenseTensor};

/// Candidate function spaces tried for every mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisCandidates {
    /// Legendre degree `p`; `None` disables the polynomial candidate.
    pub legendre_p: Option<usize>,
    /// Wavelet resolution level `s`; `None` disables the wavelet candidate.
    pub wavelet_s: Option<usize>,
    /// Wavelet polynomial degree `p`.
    pub wavelet_p: usize,
}

impl Default for BasisCandidates {
    fn default() -> Self {
        Self { legendre_p: Some(20), wavelet_s: Some(5), wavelet_p: 3 }
    }
}

impl BasisCandidates {
    pub fn specs(&self, domain: (f64, f64)) -> Result<Vec<BasisSpec>> {
        let mut out = Vec::new();
        if let Some(p) = self.legendre_p {
            out.push(BasisSpec::legendre(p, domain)?);
        }
        if let Some(s) = self.wavelet_s {
            out.push(BasisSpec::wavelet(s, self.wavelet_p, domain)?);
        }
        if out.is_empty() {
            return Err(Error::param("at least one basis candidate must be enabled"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressConfig {
    /// Interpolation grid for scattered input; `None` means 64 nodes per mode.
    pub grid: Option<Vec<usize>>,
    pub epsilon: f64,
    pub basis: BasisCandidates,
    /// Fraction of scattered samples used for interpolation.
    pub subsample_fraction: f64,
    pub seed: u64,
    pub idw: IdwOptions,
    pub mode_order: ModeOrder,
    pub residual_ceiling: f64,
    /// Points used to measure the validation error.
    pub validation_points: usize,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            grid: None,
            epsilon: 1e-2,
            basis: BasisCandidates::default(),
            subsample_fraction: 0.1,
            seed: 0,
            idw: IdwOptions::default(),
            mode_order: ModeOrder::default(),
            residual_ceiling: DEFAULT_RESIDUAL_CEILING,
            validation_points: 10_000,
        }
    }
}

pub const DEFAULT_GRID_NODES: usize = 64;

pub enum Dataset {
    Scattered(PointCloud),
    /// Values already on a structured grid (interpolation is skipped).
    Structured {
        tensor: DenseTensor,
        grid: StructuredGrid,
    },
}

impl Dataset {
    /// Structured data on the unit box.
    pub fn structured_unit(tensor: DenseTensor) -> Result<Self> {
        let grid = StructuredGrid::unit(tensor.shape().to_vec())?;
        Ok(Dataset::Structured { tensor, grid })
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Scattered(pc) => pc.len(),
            Dataset::Structured { tensor, .. } => tensor.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::Scattered(pc) => pc.dim(),
            Dataset::Structured { tensor, .. } => tensor.order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressReport {
    pub original_points: usize,
    pub grid_shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub tucker_error: f64,
    /// Nonzero coefficients of every mode function.
    pub nnz: Vec<Vec<usize>>,
    /// Number of wavelet-basis fits per mode (the rest are Legendre).
    pub wavelet_fits: Vec<usize>,
    pub flagged_fits: usize,
    pub storage: StorageCost,
    pub compression_ratio: f64,
    pub compression_ratio_with_index: f64,
    /// Relative ℓ2 error on held-out samples (scattered input) or random
    /// grid nodes (structured input).
    pub validation_error: f64,
    pub validation_points: usize,
    pub coverage: Option<Coverage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compressed {
    pub model: FunctionalTucker,
    pub report: CompressReport,
}

pub fn compress(data: &Dataset, cfg: &CompressConfig) -> Result<Compressed> {
    if !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::param(format!("tolerance must be finite and nonnegative, got {}", cfg.epsilon)));
    }
    if cfg.validation_points == 0 {
        return Err(Error::param("validation needs at least one point"));
    }
    let d = data.dim();
    let interpolated;
    let (tensor, grid, coverage, holdout) = match data {
        Dataset::Scattered(pc) => {
            let sizes = cfg.grid.clone().unwrap_or_else(|| vec![DEFAULT_GRID_NODES; d]);
            if sizes.len() != d {
                return Err(Error::param(format!("{} grid sizes for {d}-dimensional data", sizes.len())));
            }
            let grid = StructuredGrid::covering(pc, sizes)?;
            let (keep, rest) = split_indices(pc.len(), cfg.subsample_fraction, cfg.seed)?;
            log::info!("interpolating {} of {} samples onto a {:?} grid", keep.len(), pc.len(), grid.sizes());
            interpolated = interpolate_to_grid(&pc.select(&keep), &grid, &cfg.idw)?;
            let holdout = if rest.is_empty() { (0..pc.len()).collect() } else { rest };
            (&interpolated.tensor, grid, Some(interpolated.coverage), holdout)
        }
        Dataset::Structured { tensor, grid } => {
            if grid.sizes() != tensor.shape() {
                return Err(Error::shape(format!(
                    "grid {:?} for a tensor of shape {:?}",
                    grid.sizes(),
                    tensor.shape()
                )));
            }
            (tensor, grid.clone(), None, Vec::new())
        }
    };

    let dec = sthosvd_ordered(tensor, cfg.epsilon, cfg.mode_order)?;
    log::info!("ST-HOSVD ranks {:?}, relative error {:.3e}", dec.ranks(), dec.achieved_error);
    let grids: Vec<Vec<f64>> = (0..d).map(|k| grid.nodes(k)).collect();
    let candidates = grid.domains().iter().map(|&dom| cfg.basis.specs(dom)).collect::<Result<Vec<_>>>()?;
    let opts = AssembleOptions { residual_ceiling: cfg.residual_ceiling, epsilon: cfg.epsilon };
    let mut model = assemble(&dec, &grids, &candidates, &opts)?;
    model.metadata.provenance = serde_json::json!({ "compress": cfg, "original_points": data.len() });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let (validation_error, validation_points) = match data {
        Dataset::Scattered(pc) => {
            let m = cfg.validation_points.min(holdout.len());
            let mut pick: Vec<usize> =
                index::sample(&mut rng, holdout.len(), m).into_iter().map(|i| holdout[i]).collect();
            pick.sort_unstable();
            let v = pc.select(&pick);
            (relative_misfit(&model.evaluate_batch(v.points())?, v.values())?, m)
        }
        Dataset::Structured { tensor, grid } => {
            let m = cfg.validation_points.min(tensor.len());
            let mut pick = index::sample(&mut rng, tensor.len(), m).into_vec();
            pick.sort_unstable();
            let mut pts = vec![0.0; m * d];
            for (p, &lin) in pts.chunks_exact_mut(d).zip(&pick) {
                grid.node_into(lin, p);
            }
            let truth: Vec<f64> = pick.iter().map(|&i| tensor.data()[i]).collect();
            (relative_misfit(&model.evaluate_batch(&pts)?, &truth)?, m)
        }
    };

    let storage = model.storage_cost();
    let report = CompressReport {
        original_points: data.len(),
        grid_shape: grid.sizes().to_vec(),
        ranks: model.ranks().to_vec(),
        tucker_error: dec.achieved_error,
        nnz: model.modes().iter().map(|m| m.functions.iter().map(|f| f.nnz()).collect()).collect(),
        wavelet_fits: model
            .modes()
            .iter()
            .map(|m| m.functions.iter().filter(|f| !f.basis.is_legendre()).count())
            .collect(),
        flagged_fits: model.metadata.flagged_fits.len(),
        storage,
        compression_ratio: model.compression_ratio(data.len())?,
        compression_ratio_with_index: model.compression_ratio_with_index(data.len())?,
        validation_error,
        validation_points,
        coverage,
    };
    Ok(Compressed { model, report })
}

/// `‖pred − truth‖ / ‖truth‖`.
pub fn relative_misfit(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} values", pred.len(), truth.len())));
    }
    let denom = norm2(truth);
    if denom == 0.0 {
        return Err(Error::Degenerate("reference values are all zero".into()));
    }
    let diff: Vec<f64> = pred.iter().zip(truth).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / denom)
}

/// A 2-D cut through a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `values[j * x.len() + i]` is the value at `(x[i], y[j])`.
    pub values: Vec<f64>,
}

/// Evaluates `model` on an `nx × ny` equispaced grid over modes
/// `free = (a, b)`, holding every other mode `k` at `fixed[k]`.
pub fn slice(
    model: &FunctionalTucker,
    free: (usize, usize),
    fixed: &[f64],
    resolution: (usize, usize),
) -> Result<Slice> {
    let d = model.order();
    let (a, b) = free;
    if a >= d || b >= d || a == b {
        return Err(Error::param(format!("slice modes ({a}, {b}) must be two distinct modes below {d}")));
    }
    if fixed.len() != d {
        return Err(Error::param(format!("{} fixed coordinates for a {d}-way model", fixed.len())));
    }
    let domains = model.domains();
    let axis = |k: usize, n: usize| -> Result<Vec<f64>> {
        crate::model::grid_nodes(n, domains[k]).map_err(|_| Error::param(format!("slice resolution {n} is below 2")))
    };
    let (x, y) = (axis(a, resolution.0)?, axis(b, resolution.1)?);
    let nodes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            if k == a {
                x.clone()
            } else if k == b {
                y.clone()
            } else {
                vec![fixed[k]]
            }
        })
        .collect();
    let grid = model.evaluate_grid(&nodes)?;
    let (nx, ny) = (x.len(), y.len());
    let values = if a < b {
        grid.into_data()
    } else {
        // Storage order puts mode b first; transpose to x-fastest.
        let data = grid.into_data();
        let mut out = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                out[j * nx + i] = data[i * ny + j];
            }
        }
        out
    };
    Ok(Slice { x, y, values })
}
