//! Scattered-to-grid interpolation by k-nearest-neighbour inverse distance
//! weighting over a uniform bin index.
//!
//! Coordinates are rescaled so the target grid spans the unit box, which
//! keeps distances comparable across modes with different physical units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PointCloud, StructuredGrid};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Exact-hit radius, relative to the grid cell diagonal.
const HIT_TOL: f64 = 1e-12;
/// Target mean occupancy of the bin index.
const POINTS_PER_BIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdwOptions {
    /// Neighbour count; `None` means `2d + 2`.
    pub neighbors: Option<usize>,
    pub power: f64,
}

impl Default for IdwOptions {
    fn default() -> Self {
        Self { neighbors: None, power: 2.0 }
    }
}

/// How well the samples cover the grid. Distances are in units of the grid
/// cell diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coverage {
    pub nodes: usize,
    pub exact_hits: usize,
    /// Nodes outside the sample bounding box, filled by nearest neighbour.
    pub extrapolated: usize,
    pub mean_nearest: f64,
    pub max_nearest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub tensor: DenseTensor,
    pub coverage: Coverage,
}

pub fn interpolate_to_grid(pc: &PointCloud, grid: &StructuredGrid, opts: &IdwOptions) -> Result<Interpolated> {
    let d = grid.order();
    if pc.dim() != d {
        return Err(Error::shape(format!("{}-dimensional samples on a {d}-way grid", pc.dim())));
    }
    if let Some(q) = pc.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite sample value at point {q}")));
    }
    if !(opts.power > 0.0 && opts.power.is_finite()) {
        return Err(Error::param(format!("IDW power must be positive, got {}", opts.power)));
    }
    let k = opts.neighbors.unwrap_or(2 * d + 2).min(pc.len());
    if k == 0 {
        return Err(Error::param("IDW needs at least one neighbour"));
    }

    let index = BinIndex::build(pc, grid);
    let cell = grid.sizes().iter().map(|&n| (1.0 / (n - 1) as f64).powi(2)).sum::<f64>().sqrt();
    let hit2 = (HIT_TOL * cell).powi(2);
    let slack = 1e-12;
    let inside = |t: &[f64]| t.iter().zip(&index.bbox).all(|(&x, &(lo, hi))| x >= lo - slack && x <= hi + slack);

    let n0 = grid.sizes()[0];
    let mut data = vec![0.0; grid.len()];
    let partials: Vec<Coverage> = data
        .par_chunks_mut(n0)
        .enumerate()
        .map_init(
            || (vec![0.0; d], Vec::with_capacity(k + 1)),
            |(t, best), (c, out)| {
                let mut cov = Coverage::default();
                grid.node_into(c * n0, t);
                normalize(grid, t);
                for (i, v) in out.iter_mut().enumerate() {
                    t[0] = i as f64 / (n0 - 1) as f64;
                    let kk = if inside(t) {
                        k
                    } else {
                        cov.extrapolated += 1;
                        1
                    };
                    index.knn(t, kk, best);
                    let (d0, j0) = best[0];
                    let near = d0.sqrt() / cell;
                    cov.nodes += 1;
                    cov.mean_nearest += near;
                    cov.max_nearest = cov.max_nearest.max(near);
                    if d0 < hit2 {
                        cov.exact_hits += 1;
                        *v = index.vals[j0];
                        continue;
                    }
                    let (mut num, mut den) = (0.0, 0.0);
                    for &(d2, j) in best.iter() {
                        let w = if opts.power == 2.0 { 1.0 / d2 } else { d2.powf(-0.5 * opts.power) };
                        num += w * index.vals[j];
                        den += w;
                    }
                    *v = num / den;
                }
                cov
            },
        )
        .collect();

    let mut coverage = Coverage::default();
    for p in &partials {
        coverage.nodes += p.nodes;
        coverage.exact_hits += p.exact_hits;
        coverage.extrapolated += p.extrapolated;
        coverage.mean_nearest += p.mean_nearest;
        coverage.max_nearest = coverage.max_nearest.max(p.max_nearest);
    }
    coverage.mean_nearest /= coverage.nodes as f64;
    if coverage.extrapolated > 0 {
        log::warn!(
            "{} of {} grid nodes lie outside the sample bounding box; filled by nearest neighbour",
            coverage.extrapolated,
            coverage.nodes
        );
    }
    let tensor = DenseTensor::new(grid.sizes().to_vec(), data)?;
    Ok(Interpolated { tensor, coverage })
}

fn normalize(grid: &StructuredGrid, y: &mut [f64]) {
    for (x, &(a, b)) in y.iter_mut().zip(grid.domains()) {
        *x = (*x - a) / (b - a);
    }
}

/// Points bucketed into a uniform lattice of bins (CSR layout).
struct BinIndex {
    d: usize,
    bbox: Vec<(f64, f64)>,
    lo: Vec<f64>,
    width: Vec<f64>,
    bins: Vec<usize>,
    start: Vec<usize>,
    coords: Vec<f64>,
    vals: Vec<f64>,
}

impl BinIndex {
    fn build(pc: &PointCloud, grid: &StructuredGrid) -> Self {
        let d = pc.dim();
        let q = pc.len();
        let mut norm = pc.points().to_vec();
        for p in norm.chunks_exact_mut(d) {
            normalize(grid, p);
        }
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for p in norm.chunks_exact(d) {
            for (b, &c) in bbox.iter_mut().zip(p) {
                b.0 = b.0.min(c);
                b.1 = b.1.max(c);
            }
        }
        let extents: Vec<f64> = bbox.iter().map(|&(a, b)| b - a).collect();
        let live: Vec<f64> = extents.iter().copied().filter(|&e| e > 0.0).collect();
        let target = (q as f64 / POINTS_PER_BIN).max(1.0);
        let side =
            if live.is_empty() { 1.0 } else { (live.iter().product::<f64>() / target).powf(1.0 / live.len() as f64) };
        let bins: Vec<usize> = extents
            .iter()
            .map(|&e| if e > 0.0 { ((e / side).floor() as usize).clamp(1, 1 << 20) } else { 1 })
            .collect();
        let width: Vec<f64> =
            extents.iter().zip(&bins).map(|(&e, &n)| if e > 0.0 { e / n as f64 } else { 1.0 }).collect();
        let lo: Vec<f64> = bbox.iter().map(|b| b.0).collect();

        let mut index = Self { d, bbox, lo, width, bins, start: Vec::new(), coords: Vec::new(), vals: Vec::new() };
        let nbins: usize = index.bins.iter().product();
        let cell_of: Vec<usize> = norm.chunks_exact(d).map(|p| index.bin_of(p)).collect();
        let mut start = vec![0usize; nbins + 1];
        for &b in &cell_of {
            start[b + 1] += 1;
        }
        for i in 0..nbins {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut coords = vec![0.0; q * d];
        let mut vals = vec![0.0; q];
        for (j, &b) in cell_of.iter().enumerate() {
            let slot = fill[b];
            fill[b] += 1;
            coords[slot * d..(slot + 1) * d].copy_from_slice(&norm[j * d..(j + 1) * d]);
            vals[slot] = pc.values()[j];
        }
        index.start = start;
        index.coords = coords;
        index.vals = vals;
        index
    }

    fn cell_coord(&self, k: usize, x: f64) -> usize {
        let c = ((x - self.lo[k]) / self.width[k]).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.bins[k] - 1)
        }
    }

    fn bin_of(&self, p: &[f64]) -> usize {
        let mut b = 0;
        for k in (0..self.d).rev() {
            b = b * self.bins[k] + self.cell_coord(k, p[k]);
        }
        b
    }

    /// `k` nearest samples to `t` as `(squared distance, slot)`, ascending;
    /// ties broken by slot so results are reproducible.
    fn knn(&self, t: &[f64], k: usize, best: &mut Vec<(f64, usize)>) {
        best.clear();
        let d = self.d;
        let mut c = [0usize; crate::tensor::MAX_ORDER];
        for i in 0..d {
            c[i] = self.cell_coord(i, t[i]);
        }
        let mut r = 0usize;
        loop {
            self.visit_shell(&c[..d], r, |slot| {
                let p = &self.coords[slot * d..(slot + 1) * d];
                let d2: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.len() < k || (d2, slot) < best[k - 1] {
                    let pos = best.partition_point(|e| *e < (d2, slot));
                    best.insert(pos, (d2, slot));
                    best.truncate(k);
                }
            });
            let mut bound = f64::INFINITY;
            for i in 0..d {
                if c[i] > r {
                    bound = bound.min(t[i] - (self.lo[i] + (c[i] - r) as f64 * self.width[i]));
                }
                if c[i] + r + 1 < self.bins[i] {
                    bound = bound.min(self.lo[i] + (c[i] + r + 1) as f64 * self.width[i] - t[i]);
                }
            }
            if bound == f64::INFINITY {
                break;
            }
            let bound = bound.max(0.0);
            if best.len() == k && best[k - 1].0 <= bound * bound {
                break;
            }
            r += 1;
        }
    }

    /// Calls `f` for every sample in bins at Chebyshev distance exactly `r`
    /// from bin `c`.
    fn visit_shell(&self, c: &[usize], r: usize, mut f: impl FnMut(usize)) {
        let d = self.d;
        let mut lo = [0usize; crate::tensor::MAX_ORDER];
        let mut hi = [0usize; crate::tensor::MAX_ORDER];
        for i in 0..d {
            lo[i] = c[i].saturating_sub(r);
            hi[i] = (c[i] + r).min(self.bins[i] - 1);
        }
        let mut cur = lo;
        loop {
            let on_shell = r == 0 || (0..d).any(|i| cur[i] + r == c[i] || cur[i] == c[i] + r);
            if on_shell {
                let mut b = 0;
                for i in (0..d).rev() {
                    b = b * self.bins[i] + cur[i];
                }
                for slot in self.start[b]..self.start[b + 1] {
                    f(slot);
                }
            }
            let mut i = 0;
            loop {
                if i == d {
                    return;
                }
                if cur[i] < hi[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = lo[i];
                i += 1;
            }
        }
    }
}
