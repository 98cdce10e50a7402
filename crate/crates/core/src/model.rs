//! The compressed artifact: a Tucker core plus, for every mode, one sparse
//! functional expansion per core index.
//!
//! ```text
//! ũ(y) = Σ_j α_j · w_{j_1}(y_1) ⋯ w_{j_d}(y_d),   w_{j_k}(y_k) = Σ_i c_i φ_i(y_k)
//! ```
//!
//! The full tensor-product expansion over the bases is never formed;
//! evaluation costs `O(Σ n_k r_k + Π r_k)` per point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{grid_coordinate, BasisSpec};
use crate::error::{Error, Result};
use crate::lasso::{fit_singular_vector, SparseFit};
use crate::sthosvd::TuckerDecomposition;
use crate::tensor::{DenseTensor, Matrix};

/// Fits whose relative residual exceeds this are flagged in the metadata.
pub const DEFAULT_RESIDUAL_CEILING: f64 = 0.5;

/// The functions of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFunctions {
    /// Physical interval of the coordinate.
    pub domain: (f64, f64),
    pub functions: Vec<SparseFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedFit {
    pub mode: usize,
    pub index: usize,
    pub residual_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Structured grid the factors were computed on.
    pub grid_shape: Vec<usize>,
    /// Requested Tucker precision.
    pub epsilon: f64,
    /// Precision reported by the decomposition.
    pub tucker_error: f64,
    pub residual_ceiling: f64,
    pub flagged_fits: Vec<FlaggedFit>,
    /// Free-form provenance (run configuration, data statistics).
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalTucker {
    core: DenseTensor,
    modes: Vec<ModeFunctions>,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StorageCost {
    /// Core entries plus nonzero expansion coefficients.
    pub coeff_count: usize,
    /// 8 bytes per counted coefficient.
    pub value_bytes: usize,
    /// 4 bytes per nonzero expansion coefficient for its basis index.
    pub index_bytes: usize,
}

impl StorageCost {
    pub fn total_bytes(&self) -> usize {
        self.value_bytes + self.index_bytes
    }
}

impl FunctionalTucker {
    pub fn new(core: DenseTensor, modes: Vec<ModeFunctions>, metadata: ModelMetadata) -> Result<Self> {
        if core.order() != modes.len() {
            return Err(Error::shape(format!("core of order {} with {} modes", core.order(), modes.len())));
        }
        for (k, m) in modes.iter().enumerate() {
            if m.functions.len() != core.shape()[k] {
                return Err(Error::shape(format!(
                    "mode {k} holds {} functions, core extent is {}",
                    m.functions.len(),
                    core.shape()[k]
                )));
            }
            let (a, b) = m.domain;
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::param(format!("mode {k} domain [{a}, {b}] is degenerate")));
            }
            for f in &m.functions {
                let n = f.basis.dim();
                if f.coeffs.iter().any(|&(i, _)| i as usize >= n) {
                    return Err(Error::shape(format!("mode {k} coefficient index beyond basis size {n}")));
                }
                if f.coeffs.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::shape(format!("mode {k} coefficients not sorted by index")));
                }
            }
        }
        Ok(Self { core, modes, metadata })
    }

    pub fn order(&self) -> usize {
        self.core.order()
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn modes(&self) -> &[ModeFunctions] {
        &self.modes
    }

    pub fn domains(&self) -> Vec<(f64, f64)> {
        self.modes.iter().map(|m| m.domain).collect()
    }

    /// Same mode functions, different core.
    pub fn with_core(&self, core: DenseTensor) -> Result<Self> {
        if core.shape() != self.core.shape() {
            return Err(Error::shape(format!(
                "replacement core shape {:?} differs from {:?}",
                core.shape(),
                self.core.shape()
            )));
        }
        Ok(Self { core, modes: self.modes.clone(), metadata: self.metadata.clone() })
    }

    /// Values `w_{j}(y_k)` of every function of mode `k`.
    pub fn mode_values(&self, k: usize, y: f64) -> Result<Vec<f64>> {
        let mut scratch = Scratch::default();
        let mut out = Vec::new();
        self.mode_values_into(k, y, &mut scratch, &mut out)?;
        Ok(out)
    }

    fn mode_values_into(&self, k: usize, y: f64, scratch: &mut Scratch, out: &mut Vec<f64>) -> Result<()> {
        let mode = &self.modes[k];
        let (a, b) = mode.domain;
        let slack = crate::basis::DOMAIN_SLACK * (b - a);
        if !(y >= a - slack && y <= b + slack) {
            return Err(Error::Domain { value: y, lo: a, hi: b });
        }
        out.clear();
        scratch.cached.clear();
        for f in &mode.functions {
            let slot = match scratch.cached.iter().position(|(s, _)| s == &f.basis) {
                Some(i) => i,
                None => {
                    let mut v = vec![0.0; f.basis.dim()];
                    f.basis.eval_into(y, &mut v)?;
                    scratch.cached.push((f.basis, v));
                    scratch.cached.len() - 1
                }
            };
            let vals = &scratch.cached[slot].1;
            out.push(f.coeffs.iter().map(|&(i, c)| c * vals[i as usize]).sum());
        }
        Ok(())
    }

    /// Per-mode function values at a point.
    pub fn mode_vectors(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(y)?;
        let mut scratch = Scratch::default();
        (0..self.order())
            .map(|k| {
                let mut v = Vec::new();
                self.mode_values_into(k, y[k], &mut scratch, &mut v)?;
                Ok(v)
            })
            .collect()
    }

    /// Per-mode value tables at a batch of points (point-major, `Q·d`
    /// coordinates): entry `k` is the `Q × r_k` matrix `w^{(k)}_j(y^q_k)`.
    pub fn mode_tables(&self, points: &[f64]) -> Result<Vec<Matrix>> {
        let d = self.order();
        if points.is_empty() || !points.len().is_multiple_of(d) {
            return Err(Error::shape(format!("{} coordinates do not split into {d}-vectors", points.len())));
        }
        let q = points.len() / d;
        (0..d)
            .map(|k| {
                let rows: Vec<Vec<f64>> = points
                    .par_chunks(d)
                    .map_init(Scratch::default, |scratch, y| {
                        let mut v = Vec::new();
                        self.mode_values_into(k, y[k], scratch, &mut v).map(|_| v)
                    })
                    .collect::<Result<_>>()?;
                Ok(Matrix::from_fn(q, self.ranks()[k], |i, j| rows[i][j]))
            })
            .collect()
    }

    /// Values on the tensor-product grid `nodes[0] × ⋯ × nodes[d-1]`, by
    /// mode products of the core with per-mode value tables.
    pub fn evaluate_grid(&self, nodes: &[Vec<f64>]) -> Result<DenseTensor> {
        if nodes.len() != self.order() {
            return Err(Error::shape(format!("{} node lists for a {}-way model", nodes.len(), self.order())));
        }
        let mut scratch = Scratch::default();
        let mut out = self.core.clone();
        for (k, ys) in nodes.iter().enumerate() {
            if ys.is_empty() {
                return Err(Error::shape(format!("mode {k}: empty node list")));
            }
            let mut table = Matrix::zeros(ys.len(), self.ranks()[k]);
            let mut v = Vec::new();
            for (i, &y) in ys.iter().enumerate() {
                self.mode_values_into(k, y, &mut scratch, &mut v)?;
                for (j, &x) in v.iter().enumerate() {
                    table.set(i, j, x);
                }
            }
            out = out.mode_product(&table, k)?;
        }
        Ok(out)
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.order() {
            return Err(Error::shape(format!("point has {} coordinates, model has {} modes", y.len(), self.order())));
        }
        Ok(())
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<f64> {
        self.check_point(y)?;
        let mut scratch = Scratch::default();
        self.evaluate_with(y, &mut scratch)
    }

    fn evaluate_with(&self, y: &[f64], scratch: &mut Scratch) -> Result<f64> {
        let mut vectors = std::mem::take(&mut scratch.vectors);
        vectors.resize_with(self.order(), Vec::new);
        for (k, v) in vectors.iter_mut().enumerate() {
            self.mode_values_into(k, y[k], scratch, v)?;
        }
        let value = contract(&self.core, &vectors, &mut scratch.buffer);
        scratch.vectors = vectors;
        Ok(value)
    }

    /// Evaluates a batch of points stored point-major (`points.len() = Q·d`).
    pub fn evaluate_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let d = self.order();
        if !points.len().is_multiple_of(d) {
            return Err(Error::shape(format!("{} coordinates do not split into {d}-vectors", points.len())));
        }
        points.par_chunks(d).map_init(Scratch::default, |scratch, y| self.evaluate_with(y, scratch)).collect()
    }

    pub fn storage_cost(&self) -> StorageCost {
        let nnz: usize = self.modes.iter().flat_map(|m| &m.functions).map(SparseFit::nnz).sum();
        let coeff_count = self.core.len() + nnz;
        StorageCost { coeff_count, value_bytes: 8 * coeff_count, index_bytes: 4 * nnz }
    }

    /// `8·Q` bytes of raw doubles over the value bytes of the model (basis
    /// indices not counted).
    pub fn compression_ratio(&self, original_point_count: usize) -> Result<f64> {
        ratio(original_point_count, self.storage_cost().value_bytes)
    }

    /// As [`compression_ratio`](Self::compression_ratio), charging 4 bytes per
    /// stored basis index as well.
    pub fn compression_ratio_with_index(&self, original_point_count: usize) -> Result<f64> {
        ratio(original_point_count, self.storage_cost().total_bytes())
    }
}

fn ratio(points: usize, bytes: usize) -> Result<f64> {
    if points == 0 {
        return Err(Error::param("original point count must be positive"));
    }
    Ok((8 * points) as f64 / bytes as f64)
}

#[derive(Default)]
struct Scratch {
    cached: Vec<(BasisSpec, Vec<f64>)>,
    vectors: Vec<Vec<f64>>,
    buffer: Vec<f64>,
}

/// `core ×_1 v_1ᵀ ⋯ ×_d v_dᵀ`, contracting the fastest mode first.
pub(crate) fn contract(core: &DenseTensor, vectors: &[Vec<f64>], buffer: &mut Vec<f64>) -> f64 {
    let shape = core.shape();
    let r0 = shape[0];
    let rest = core.len() / r0;
    buffer.clear();
    buffer.extend(core.data().chunks_exact(r0).map(|c| c.iter().zip(&vectors[0]).map(|(a, b)| a * b).sum::<f64>()));
    let mut len = rest;
    for k in 1..shape.len() {
        let rk = shape[k];
        len /= rk;
        for o in 0..len {
            let s: f64 = buffer[o * rk..(o + 1) * rk].iter().zip(&vectors[k]).map(|(a, b)| a * b).sum();
            buffer[o] = s;
        }
    }
    buffer[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub residual_ceiling: f64,
    /// Tolerance the decomposition was computed with; recorded in the metadata.
    pub epsilon: f64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self { residual_ceiling: DEFAULT_RESIDUAL_CEILING, epsilon: 0.0 }
    }
}

/// Fits every factor column of `dec` as a sparse function of the grid
/// coordinate and packages the result with the core.
///
/// `grids[k]` holds the physical node coordinates of mode `k`;
/// `candidates[k]` the spaces tried for that mode (their domains should
/// cover the grid).
pub fn assemble(
    dec: &TuckerDecomposition,
    grids: &[Vec<f64>],
    candidates: &[Vec<BasisSpec>],
    opts: &AssembleOptions,
) -> Result<FunctionalTucker> {
    let d = dec.core.order();
    if grids.len() != d || candidates.len() != d {
        return Err(Error::shape(format!(
            "{d}-way decomposition with {} grids and {} candidate lists",
            grids.len(),
            candidates.len()
        )));
    }
    for (k, (g, w)) in grids.iter().zip(&dec.factors).enumerate() {
        if g.len() != w.rows() {
            return Err(Error::shape(format!("mode {k}: {} grid nodes for {} factor rows", g.len(), w.rows())));
        }
        if g.len() < 2 {
            return Err(Error::param(format!("mode {k} grid needs at least 2 nodes")));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..d).flat_map(|k| (0..dec.factors[k].cols()).map(move |j| (k, j))).collect();
    let fits: Vec<SparseFit> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let samples: Vec<(f64, f64)> =
                grids[k].iter().copied().zip(dec.factors[k].col(j).iter().copied()).collect();
            fit_singular_vector(&samples, &candidates[k])
        })
        .collect::<Result<_>>()?;

    let mut flagged = Vec::new();
    let mut modes: Vec<ModeFunctions> =
        grids.iter().map(|g| ModeFunctions { domain: (g[0], g[g.len() - 1]), functions: Vec::new() }).collect();
    for (&(k, j), fit) in jobs.iter().zip(fits) {
        if fit.residual_rel > opts.residual_ceiling {
            log::warn!("mode {k} function {j}: relative residual {:.3e} above ceiling", fit.residual_rel);
            flagged.push(FlaggedFit { mode: k, index: j, residual_rel: fit.residual_rel });
        }
        modes[k].functions.push(fit);
    }
    let metadata = ModelMetadata {
        grid_shape: dec.grid_shape(),
        epsilon: opts.epsilon,
        tucker_error: dec.achieved_error,
        residual_ceiling: opts.residual_ceiling,
        flagged_fits: flagged,
        provenance: serde_json::Value::Null,
    };
    FunctionalTucker::new(dec.core.clone(), modes, metadata)
}

/// Equispaced physical node coordinates of a grid with `n` nodes on `domain`.
pub fn grid_nodes(n: usize, domain: (f64, f64)) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::param(format!("grid needs at least 2 nodes, got {n}")));
    }
    Ok((0..n).map(|i| grid_coordinate(i, n, domain)).collect())
}
