#![allow(dead_code)]

use fstucker::basis::BasisSpec;
use fstucker::lasso::SparseFit;
use fstucker::model::{FunctionalTucker, ModeFunctions, ModelMetadata};
use fstucker::tensor::{DenseTensor, Matrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| g.sample(StandardNormal)).collect()
}

pub fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
    let mut g = rng(seed);
    let n = shape.iter().product();
    DenseTensor::new(shape.to_vec(), gaussian(&mut g, n)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> Matrix {
    Matrix::new(rows, cols, gaussian(g, rows * cols)).unwrap()
}

/// `n × r` matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn orthonormal(n: usize, r: usize, g: &mut ChaCha8Rng) -> Matrix {
    let a = DMatrix::from_column_slice(n, r, &gaussian(g, n * r));
    Matrix::from_nalgebra(&a.qr().q())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

/// Model on the unit box whose mode functions are random sparse Legendre
/// expansions, with a Gaussian core.
pub fn random_model(ranks: &[usize], seed: u64) -> FunctionalTucker {
    let mut g = rng(seed);
    let modes = ranks
        .iter()
        .map(|&r| ModeFunctions {
            domain: (0.0, 1.0),
            functions: (0..r)
                .map(|j| SparseFit {
                    basis: BasisSpec::legendre(r + 3, (0.0, 1.0)).unwrap(),
                    coeffs: vec![(j as u32, 1.0), (j as u32 + 2, g.random_range(-0.5..0.5))],
                    chosen_lambda: 0.0,
                    loo_error: 0.0,
                    residual_rel: 0.0,
                })
                .collect(),
        })
        .collect();
    let len = ranks.iter().product();
    let core = DenseTensor::new(ranks.to_vec(), gaussian(&mut g, len)).unwrap();
    FunctionalTucker::new(core, modes, ModelMetadata::default()).unwrap()
}

pub fn uniform_points(q: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut g = rng(seed);
    (0..q * d).map(|_| g.random()).collect()
}

/// Entry `(i_1, …, i_d)` of `t` read with an explicitly spelled-out
/// mode-0-fastest linearization.
pub fn entry(t: &DenseTensor, idx: &[usize]) -> f64 {
    let mut lin = 0;
    let mut stride = 1;
    for (&i, &n) in idx.iter().zip(t.shape()) {
        lin += i * stride;
        stride *= n;
    }
    t.data()[lin]
}

/// Mode-`k` unfolding built by enumerating every multi-index.
pub fn brute_unfold(t: &DenseTensor, k: usize) -> DMatrix<f64> {
    let shape = t.shape();
    let cols: usize = shape.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, &n)| n).product();
    let mut out = DMatrix::zeros(shape[k], cols);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..t.len() {
        let mut col = 0;
        let mut stride = 1;
        for (m, (&i, &n)) in idx.iter().zip(shape).enumerate() {
            if m != k {
                col += i * stride;
                stride *= n;
            }
        }
        out[(idx[k], col)] = entry(t, &idx);
        for (i, &n) in idx.iter_mut().zip(shape) {
            *i += 1;
            if *i < n {
                break;
            }
            *i = 0;
        }
    }
    out
}
