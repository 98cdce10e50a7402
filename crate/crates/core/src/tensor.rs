//! Dense d-way tensors and the multilinear kernels the rest of the crate
//! builds on.
//!
//! Storage is column-major in the tensor sense: mode 0 varies fastest, so
//! entry `(i_0, i_1, …, i_{d-1})` lives at
//! `i_0 + I_0 * (i_1 + I_1 * (i_2 + …))`. Matrices use the same convention
//! (column-major), which makes a mode-0 unfolding a zero-copy view.
//!
//! Mode indices are zero-based throughout the API.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maximum supported tensor order.
pub const MAX_ORDER: usize = 8;

/// Target element count per work block for blocked reductions. Blocks are
/// sized from the data alone, never from the thread count, so reductions
/// sum in the same order on any pool.
const BLOCK_ELEMS: usize = 1 << 18;

/// Dense real matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + n * i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major nested slices; convenient in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows"));
        }
        if r == 0 || c == 0 {
            return Err(Error::shape("empty matrix"));
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.rows * j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + self.rows * j] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.rows, self.cols)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_nalgebra(&(self.view() * other.view())))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!("vector of length {} for {} columns", x.len(), self.cols)));
        }
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        Ok(y)
    }

    /// `A^T x`.
    pub fn tmatvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::shape(format!("vector of length {} for {} rows", x.len(), self.rows)));
        }
        Ok((0..self.cols).map(|j| dot(self.col(j), x)).collect())
    }

    /// Largest absolute entry of `A^T A - I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.view().tr_mul(&self.view());
        let mut worst: f64 = 0.0;
        for j in 0..self.cols {
            for i in 0..self.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A dense d-way array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!("shape {:?} needs {} entries, got {}", shape, len, data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self { shape, data: vec![0.0; len] })
    }

    /// Fills a tensor by calling `f` on every multi-index in storage order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        linear_index(&self.shape, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(Error::ModeIndex { mode: k, order: self.order() });
        }
        Ok(())
    }

    /// `(prefix, extent, suffix)` sizes around mode `k`.
    fn split(&self, k: usize) -> (usize, usize, usize) {
        let prefix = self.shape[..k].iter().product();
        let suffix = self.shape[k + 1..].iter().product();
        (prefix, self.shape[k], suffix)
    }

    /// Mode-`k` matricization: an `I_k x prod(I_m, m != k)` matrix whose
    /// columns run over the remaining modes in increasing order, lower
    /// modes fastest.
    pub fn unfold(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        let (prefix, n, suffix) = self.split(k);
        let cols = prefix * suffix;
        let mut out = vec![0.0; n * cols];
        for o in 0..suffix {
            let slab = &self.data[o * prefix * n..(o + 1) * prefix * n];
            for i in 0..n {
                for l in 0..prefix {
                    out[i + n * (l + prefix * o)] = slab[l + prefix * i];
                }
            }
        }
        Matrix::new(n, cols, out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn refold(m: &Matrix, k: usize, shape: &[usize]) -> Result<DenseTensor> {
        validate_shape(shape)?;
        if k >= shape.len() {
            return Err(Error::ModeIndex { mode: k, order: shape.len() });
        }
        let prefix: usize = shape[..k].iter().product();
        let suffix: usize = shape[k + 1..].iter().product();
        let n = shape[k];
        if m.rows() != n || m.cols() != prefix * suffix {
            return Err(Error::shape(format!(
                "{}x{} matrix cannot refold into {:?} along mode {k}",
                m.rows(),
                m.cols(),
                shape
            )));
        }
        let mut data = vec![0.0; n * prefix * suffix];
        for o in 0..suffix {
            for i in 0..n {
                for l in 0..prefix {
                    data[l + prefix * (i + n * o)] = m.get(i, l + prefix * o);
                }
            }
        }
        DenseTensor::new(shape.to_vec(), data)
    }

    /// Mode-`k` product `self ×_k m`: contracts mode `k` against the columns
    /// of `m`, replacing `I_k` by `m.rows()`.
    pub fn mode_product(&self, m: &Matrix, k: usize) -> Result<DenseTensor> {
        self.check_mode(k)?;
        let (prefix, n, suffix) = self.split(k);
        if m.cols() != n {
            return Err(Error::shape(format!("mode-{k} product needs {} matrix columns, got {}", n, m.cols())));
        }
        let j = m.rows();
        let mut shape = self.shape.clone();
        shape[k] = j;
        let mut out = vec![0.0; prefix * j * suffix];

        if prefix == 1 {
            // The tensor is an n x suffix column-major matrix; one GEMM per block of columns.
            let cols_per_block = (BLOCK_ELEMS / n.max(1)).max(1);
            let mv = m.view();
            out.par_chunks_mut(j * cols_per_block).zip(self.data.par_chunks(n * cols_per_block)).for_each(
                |(dst, src)| {
                    let ncols = src.len() / n;
                    let x = DMatrixView::from_slice(src, n, ncols);
                    let mut y = DMatrixViewMut::from_slice(dst, j, ncols);
                    y.gemm(1.0, &mv, &x, 0.0);
                },
            );
        } else {
            let mt = m.view().transpose();
            out.par_chunks_mut(prefix * j).zip(self.data.par_chunks(prefix * n)).for_each(|(dst, src)| {
                let x = DMatrixView::from_slice(src, prefix, n);
                let mut y = DMatrixViewMut::from_slice(dst, prefix, j);
                y.gemm(1.0, &x, &mt, 0.0);
            });
        }
        DenseTensor::new(shape, out)
    }

    /// Gram matrix `Y_(k) Y_(k)^T` of the mode-`k` unfolding, computed
    /// without materializing the unfolding.
    pub fn mode_gram(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        let (prefix, n, _) = self.split(k);
        let partials: Vec<DMatrix<f64>> = if prefix == 1 {
            let cols_per_block = (BLOCK_ELEMS / n.max(1)).max(1);
            self.data
                .par_chunks(n * cols_per_block)
                .map(|src| {
                    let x = DMatrixView::from_slice(src, n, src.len() / n);
                    let xt = x.transpose();
                    let mut g = DMatrix::zeros(n, n);
                    g.gemm_tr(1.0, &xt, &xt, 0.0);
                    g
                })
                .collect()
        } else {
            let slabs_per_block = (BLOCK_ELEMS / (prefix * n)).max(1);
            self.data
                .par_chunks(prefix * n * slabs_per_block)
                .map(|block| {
                    let mut g = DMatrix::zeros(n, n);
                    for src in block.chunks(prefix * n) {
                        let x = DMatrixView::from_slice(src, prefix, n);
                        g.gemm_tr(1.0, &x, &x, 1.0);
                    }
                    g
                })
                .collect()
        };
        let mut total = DMatrix::zeros(n, n);
        for g in &partials {
            total += g;
        }
        // Symmetrize away rounding asymmetry.
        let sym = (&total + total.transpose()) * 0.5;
        Ok(Matrix::from_nalgebra(&sym))
    }

    pub fn fro_norm(&self) -> f64 {
        fro_norm(self)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_ORDER {
        return Err(Error::shape(format!("tensor order must be in 1..={MAX_ORDER}, got {}", shape.len())));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("shape entries must be positive, got {shape:?}")));
    }
    Ok(())
}

pub(crate) fn linear_index(shape: &[usize], idx: &[usize]) -> usize {
    let mut lin = 0;
    for k in (0..shape.len()).rev() {
        lin = lin * shape[k] + idx[k];
    }
    lin
}

/// Advances a multi-index in storage order (mode 0 fastest).
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in 0..shape.len() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Frobenius norm, accumulated in fixed-size blocks.
pub fn fro_norm(t: &DenseTensor) -> f64 {
    let partial: Vec<f64> = t.data.par_chunks(BLOCK_ELEMS).map(|c| c.iter().map(|v| v * v).sum::<f64>()).collect();
    partial.iter().sum::<f64>().sqrt()
}

/// `‖u - ũ‖_F / ‖u‖_F`.
pub fn relative_error(u: &DenseTensor, u_tilde: &DenseTensor) -> Result<f64> {
    if u.shape != u_tilde.shape {
        return Err(Error::shape(format!("shapes differ: {:?} vs {:?}", u.shape, u_tilde.shape)));
    }
    let norm = fro_norm(u);
    if norm == 0.0 {
        return Err(Error::Degenerate("reference tensor has zero norm".into()));
    }
    let partial: Vec<f64> = u
        .data
        .par_chunks(BLOCK_ELEMS)
        .zip(u_tilde.data.par_chunks(BLOCK_ELEMS))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .collect();
    Ok(partial.iter().sum::<f64>().sqrt() / norm)
}
