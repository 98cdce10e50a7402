//! Datasets: scattered point clouds, structured grids, subsampling,
//! scattered-to-grid interpolation, file formats and synthetic fields.

mod interp;
mod io;
mod synth;

pub use interp::{interpolate_to_grid, Coverage, IdwOptions, Interpolated};
pub use io::{
    load_point_cloud, read_csv, read_fpcl, read_point_list, save_point_cloud, write_csv, write_fpcl, FPCL_MAGIC,
    FPCL_VERSION,
};
pub use synth::{synth_cloud, synth_grid, Field, FieldKind, SynthParams};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::grid_coordinate;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MAX_ORDER};

/// Scattered samples `u(y^q)`; coordinates are stored point-major (`Q × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_ORDER {
            return Err(Error::shape(format!("point dimension {dim} outside 1..={MAX_ORDER}")));
        }
        if values.is_empty() {
            return Err(Error::data("point cloud is empty"));
        }
        if points.len() != dim * values.len() {
            return Err(Error::shape(format!(
                "{} coordinates for {} points of dimension {dim}",
                points.len(),
                values.len()
            )));
        }
        if let Some(q) = points.iter().position(|c| !c.is_finite()) {
            return Err(Error::data(format!("non-finite coordinate at point {}", q / dim)));
        }
        Ok(Self { dim, points, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    /// Per-mode `(min, max)` of the coordinates.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bb = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for (b, &c) in bb.iter_mut().zip(p) {
                b.0 = b.0.min(c);
                b.1 = b.1.max(c);
            }
        }
        bb
    }

    /// Cloud restricted to `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let d = self.dim;
        let mut points = Vec::with_capacity(indices.len() * d);
        let mut values = Vec::with_capacity(indices.len());
        for &q in indices {
            points.extend_from_slice(self.point(q));
            values.push(self.values[q]);
        }
        PointCloud { dim: d, points, values }
    }
}

/// Equispaced tensor-product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    sizes: Vec<usize>,
    domains: Vec<(f64, f64)>,
}

impl StructuredGrid {
    pub fn new(sizes: Vec<usize>, domains: Vec<(f64, f64)>) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > MAX_ORDER {
            return Err(Error::shape(format!("grid order {} outside 1..={MAX_ORDER}", sizes.len())));
        }
        if sizes.len() != domains.len() {
            return Err(Error::shape(format!("{} grid sizes but {} domains", sizes.len(), domains.len())));
        }
        for (k, (&n, &(a, b))) in sizes.iter().zip(&domains).enumerate() {
            if n < 2 {
                return Err(Error::param(format!("mode {k}: grid needs at least 2 nodes, got {n}")));
            }
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::param(format!("mode {k}: degenerate interval [{a}, {b}]")));
            }
        }
        Ok(Self { sizes, domains })
    }

    /// Grid spanning the bounding box of `pc`.
    pub fn covering(pc: &PointCloud, sizes: Vec<usize>) -> Result<Self> {
        let domains =
            pc.bounding_box().into_iter().map(|(a, b)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) }).collect();
        Self::new(sizes, domains)
    }

    /// Unit-box grid `[0, 1]^d`.
    pub fn unit(sizes: Vec<usize>) -> Result<Self> {
        let d = sizes.len();
        Self::new(sizes, vec![(0.0, 1.0); d])
    }

    pub fn order(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn domains(&self) -> &[(f64, f64)] {
        &self.domains
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinate of node `i` along mode `k`.
    pub fn coordinate(&self, k: usize, i: usize) -> f64 {
        grid_coordinate(i, self.sizes[k], self.domains[k])
    }

    pub fn nodes(&self, k: usize) -> Vec<f64> {
        (0..self.sizes[k]).map(|i| self.coordinate(k, i)).collect()
    }

    /// Coordinates of the node with storage-order linear index `lin`.
    pub fn node_into(&self, mut lin: usize, out: &mut [f64]) {
        for (k, &n) in self.sizes.iter().enumerate() {
            out[k] = self.coordinate(k, lin % n);
            lin /= n;
        }
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> DenseTensor {
        use rayon::prelude::*;
        let d = self.order();
        let chunk = self.sizes[0];
        let mut data = vec![0.0; self.len()];
        data.par_chunks_mut(chunk).enumerate().for_each_init(
            || vec![0.0; d],
            |y, (c, out)| {
                self.node_into(c * chunk, y);
                for (i, v) in out.iter_mut().enumerate() {
                    y[0] = self.coordinate(0, i);
                    *v = f(y);
                }
            },
        );
        DenseTensor::new(self.sizes.clone(), data).expect("grid shape is valid")
    }
}

/// Seeded uniform subsample without replacement of `round(fraction·Q)`
/// points, returned in original order.
pub fn subsample(pc: &PointCloud, fraction: f64, seed: u64) -> Result<PointCloud> {
    let (keep, _) = split_indices(pc.len(), fraction, seed)?;
    Ok(pc.select(&keep))
}

/// Seeded partition of `0..q` into a kept subset of `round(fraction·q)`
/// indices and its complement, both sorted.
pub fn split_indices(q: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let m = (fraction * q as f64).round() as usize;
    if m == 0 {
        return Err(Error::param(format!("fraction {fraction} of {q} points selects nothing")));
    }
    if m >= q {
        return Ok(((0..q).collect(), Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, q, m).into_vec();
    keep.sort_unstable();
    let mut rest = Vec::with_capacity(q - m);
    let mut it = keep.iter().peekable();
    for i in 0..q {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            rest.push(i);
        }
    }
    Ok((keep, rest))
}
