//! ℓ1-regularized least squares: the Lasso-modified LARS path, fast
//! leave-one-out model selection along it, and basis selection for one
//! singular vector.
//!
//! The objective is `‖z − Φv‖² + λ‖v‖₁` with no factor ½, so the KKT
//! conditions read `Φ_jᵀ(z − Φv) = (λ/2)·sign(v_j)` on the active set and
//! `|Φ_jᵀ(z − Φv)| ≤ λ/2` elsewhere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, BasisSpec};
use crate::error::{Error, Result};
use crate::tensor::{dot, norm2, Matrix};

/// Diagonal hat-matrix entries at or above `1 - LEVERAGE_LIMIT` mark a step
/// as interpolating; its LOO estimate is undefined and the step is skipped.
pub const LEVERAGE_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct LarsOptions {
    /// Path step cap; `None` means `4·min(Q, P)`.
    pub max_steps: Option<usize>,
    /// Rescale columns to unit norm before running the path.
    pub standardize: bool,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    /// Reached λ = 0.
    Complete,
    /// Active set reached `Q − 1` variables.
    Saturated,
    StepCap,
    /// Active Gram matrix became numerically singular.
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub lambda: f64,
    /// Nonzero coefficients, sorted by index.
    pub coeffs: Vec<(usize, f64)>,
    /// Active indices, sorted.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub steps: Vec<PathStep>,
    pub status: PathStatus,
    pub n_features: usize,
}

impl LassoPath {
    /// Dense coefficients at an arbitrary `λ`, interpolating linearly between
    /// breakpoints. Values above the first breakpoint give zero; values below
    /// the last give the last solution.
    pub fn coefficients_at(&self, lambda: f64) -> Vec<f64> {
        let dense = |s: &PathStep| {
            let mut v = vec![0.0; self.n_features];
            for &(i, c) in &s.coeffs {
                v[i] = c;
            }
            v
        };
        let first = &self.steps[0];
        if lambda >= first.lambda {
            return dense(first);
        }
        for w in self.steps.windows(2) {
            let (hi, lo) = (&w[0], &w[1]);
            if lambda >= lo.lambda {
                let t = (hi.lambda - lambda) / (hi.lambda - lo.lambda);
                let (a, b) = (dense(hi), dense(lo));
                return a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect();
            }
        }
        dense(self.steps.last().unwrap())
    }
}

/// Full Lasso regularization path by least angle regression with the
/// Lasso modification (variables leave the active set when their
/// coefficient crosses zero).
pub fn lars_lasso_path(phi: &Matrix, z: &[f64]) -> Result<LassoPath> {
    lars_lasso_path_with(phi, z, &LarsOptions::default())
}

pub fn lars_lasso_path_with(phi: &Matrix, z: &[f64], opts: &LarsOptions) -> Result<LassoPath> {
    let (q, p) = (phi.rows(), phi.cols());
    if z.len() != q {
        return Err(Error::shape(format!("{q} rows but {} targets", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) || phi.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite regression input"));
    }
    let norms: Vec<f64> = (0..p).map(|j| norm2(phi.col(j))).collect();
    let scale: Vec<f64> = if opts.standardize {
        norms.iter().map(|&n| if n > 0.0 { 1.0 / n } else { 0.0 }).collect()
    } else {
        vec![1.0; p]
    };
    let work = if opts.standardize { Matrix::from_fn(q, p, |i, j| phi.get(i, j) * scale[j]) } else { phi.clone() };
    let usable: Vec<bool> = norms.iter().map(|&n| n > 0.0).collect();
    let max_steps = opts.max_steps.unwrap_or(4 * q.min(p)).max(1);
    let n_usable = usable.iter().filter(|&&u| u).count();
    let max_active = n_usable.min(q.saturating_sub(1));

    let saturates = max_active < n_usable;
    let mut path = Lars::new(&work, z, usable).run(max_steps, max_active, saturates);
    if opts.standardize {
        for step in &mut path.steps {
            for (i, c) in &mut step.coeffs {
                *c *= scale[*i];
            }
        }
    }
    Ok(path)
}

struct Lars<'a> {
    phi: &'a Matrix,
    z: &'a [f64],
    usable: Vec<bool>,
    coef: Vec<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
}

impl<'a> Lars<'a> {
    fn new(phi: &'a Matrix, z: &'a [f64], usable: Vec<bool>) -> Self {
        let p = phi.cols();
        Self { phi, z, usable, coef: vec![0.0; p], active: Vec::new(), signs: Vec::new() }
    }

    fn correlations(&self) -> Vec<f64> {
        let fit = self.phi.matvec(&self.coef).unwrap();
        let resid: Vec<f64> = self.z.iter().zip(&fit).map(|(a, b)| a - b).collect();
        self.phi.tmatvec(&resid).unwrap()
    }

    fn snapshot(&self, lambda: f64) -> PathStep {
        let mut active = self.active.clone();
        active.sort_unstable();
        let coeffs = active.iter().filter(|&&j| self.coef[j] != 0.0).map(|&j| (j, self.coef[j])).collect();
        PathStep { lambda, coeffs, active }
    }

    fn run(mut self, max_steps: usize, max_active: usize, saturates: bool) -> LassoPath {
        let p = self.phi.cols();
        let mut c = self.correlations();
        let c_max = (0..p).filter(|&j| self.usable[j]).map(|j| c[j].abs()).fold(0.0, f64::max);
        let mut steps = vec![self.snapshot(2.0 * c_max)];
        let n_features = p;
        if c_max == 0.0 || max_active == 0 {
            let status = if c_max == 0.0 { PathStatus::Complete } else { PathStatus::Saturated };
            return LassoPath { steps, status, n_features };
        }
        let tiny = 1e-12 * c_max;
        let mut big_c = c_max;
        // A variable that just left may re-enter, but not through the
        // crossing it sits on (same sign, γ = 0).
        let mut just_dropped: Option<(usize, f64)> = None;

        // first entrant
        let first = (0..p)
            .filter(|&j| self.usable[j])
            .max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()).then(b.cmp(&a)))
            .unwrap();
        self.active.push(first);
        self.signs.push(c[first].signum());

        let mut status = PathStatus::StepCap;
        for _ in 0..max_steps {
            let k = self.active.len();
            if saturates && k >= max_active {
                status = PathStatus::Saturated;
                break;
            }
            // equiangular direction: G_A d = s_A
            let gram = DMatrix::from_fn(k, k, |a, b| dot(self.phi.col(self.active[a]), self.phi.col(self.active[b])));
            let chol = match gram.cholesky() {
                Some(ch) if cholesky_well_conditioned(&ch.l()) => ch,
                _ => {
                    status = PathStatus::RankDeficient;
                    break;
                }
            };
            let d = chol.solve(&DVector::from_column_slice(&self.signs));
            let mut u = vec![0.0; self.phi.rows()];
            for (a, &j) in self.active.iter().enumerate() {
                for (ui, &x) in u.iter_mut().zip(self.phi.col(j)) {
                    *ui += d[a] * x;
                }
            }
            let corr_dir = self.phi.tmatvec(&u).unwrap();

            let mut gamma = big_c;
            let mut entering: Option<(usize, f64)> = None;
            if k < max_active {
                for j in 0..p {
                    if !self.usable[j] || self.active.contains(&j) {
                        continue;
                    }
                    let a = corr_dir[j];
                    for (num, den, sign) in [(big_c - c[j], 1.0 - a, 1.0), (big_c + c[j], 1.0 + a, -1.0)] {
                        if just_dropped == Some((j, sign)) {
                            continue;
                        }
                        if den > 1e-14 {
                            let g = num / den;
                            if g > tiny && g < gamma {
                                gamma = g;
                                entering = Some((j, sign));
                            }
                        }
                    }
                }
            }
            // Lasso modification: first coefficient to cross zero
            let mut leaving: Option<usize> = None;
            for (a, &j) in self.active.iter().enumerate() {
                if d[a] != 0.0 {
                    let g = -self.coef[j] / d[a];
                    if g > tiny && g < gamma {
                        gamma = g;
                        leaving = Some(a);
                        entering = None;
                    }
                }
            }
            if entering.is_some() && gamma >= big_c * (1.0 - 1e-12) {
                entering = None;
                gamma = big_c;
            }

            for (a, &j) in self.active.iter().enumerate() {
                self.coef[j] += gamma * d[a];
            }
            just_dropped = None;
            if let Some(a) = leaving {
                let j = self.active.remove(a);
                let sign = self.signs.remove(a);
                self.coef[j] = 0.0;
                just_dropped = Some((j, sign));
            }

            c = self.correlations();
            let reached_zero = leaving.is_none() && entering.is_none();
            big_c = if reached_zero { 0.0 } else { self.active.iter().map(|&j| c[j].abs()).fold(0.0, f64::max) };
            let lambda = 2.0 * big_c;
            let step = self.snapshot(lambda);
            if lambda < steps.last().unwrap().lambda {
                steps.push(step);
            } else {
                *steps.last_mut().unwrap() = step;
            }

            if let Some((j, sign)) = entering {
                self.active.push(j);
                self.signs.push(sign);
            }
            if reached_zero || big_c <= tiny {
                status = PathStatus::Complete;
                break;
            }
        }
        if status == PathStatus::RankDeficient {
            log::warn!("LARS path truncated: active Gram matrix is numerically singular");
        }
        LassoPath { steps, status, n_features }
    }
}

fn cholesky_well_conditioned(l: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    min > 1e-7 * max
}

/// Leave-one-out estimates for the least-squares refit on one active set.
#[derive(Debug, Clone, PartialEq)]
pub struct LooEstimate {
    /// `(1/Q) Σ_q ((z_q − ẑ_q) / (1 − H_qq))²` from the hat-matrix diagonal.
    pub raw: f64,
    /// `raw · Q/(Q−|A|) · (1 + tr((Φ_AᵀΦ_A)⁻¹))`, which penalizes the
    /// optimism of active sets that were themselves chosen on the data.
    pub corrected: f64,
    /// Least-squares coefficients on the active set, in active order.
    pub beta: Vec<f64>,
}

/// Leave-one-out error of the least-squares refit on `active`, via the
/// hat-matrix shortcut. Returns `None` when some diagonal hat entry is
/// within [`LEVERAGE_LIMIT`] of one.
pub fn loo_error(phi: &Matrix, z: &[f64], active: &[usize]) -> Option<LooEstimate> {
    let q = phi.rows();
    if active.is_empty() {
        let e = z.iter().map(|v| v * v).sum::<f64>() / q as f64;
        return Some(LooEstimate { raw: e, corrected: e, beta: Vec::new() });
    }
    let k = active.len();
    if k >= q {
        return None;
    }
    let sub = DMatrix::from_fn(q, k, |i, a| phi.get(i, active[a]));
    let chol = sub.tr_mul(&sub).cholesky()?;
    let rhs = sub.tr_mul(&DVector::from_column_slice(z));
    let beta = chol.solve(&rhs);
    let fit = &sub * &beta;
    let l = chol.l();
    let mut total = 0.0;
    let mut row = DVector::zeros(k);
    for i in 0..q {
        for a in 0..k {
            row[a] = sub[(i, a)];
        }
        let w = l.solve_lower_triangular(&row)?;
        let h = w.norm_squared();
        if h >= 1.0 - LEVERAGE_LIMIT {
            return None;
        }
        let r = (z[i] - fit[i]) / (1.0 - h);
        total += r * r;
    }
    let raw = total / q as f64;
    let l_inv = l.try_inverse()?;
    let trace_inv = l_inv.norm_squared();
    let correction = q as f64 / (q - k) as f64 * (1.0 + trace_inv);
    Some(LooEstimate { raw, corrected: raw * correction, beta: beta.as_slice().to_vec() })
}

/// Sparse expansion of one singular function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    pub basis: BasisSpec,
    /// `(index, value)` pairs sorted by index.
    pub coeffs: Vec<(u32, f64)>,
    pub chosen_lambda: f64,
    /// Corrected LOO estimate of the selected step (the selection score).
    pub loo_error: f64,
    pub residual_rel: f64,
}

impl SparseFit {
    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    /// Achieved ℓ1 norm of the coefficients.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|(_, v)| v.abs()).sum()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = self.basis.eval(x)?;
        Ok(self.coeffs.iter().map(|&(i, c)| c * v[i as usize]).sum())
    }
}

/// Picks the path step with the smallest corrected LOO error and refits
/// ordinary least squares on its active set.
pub fn loo_select(path: &LassoPath, phi: &Matrix, z: &[f64], basis: BasisSpec) -> Result<SparseFit> {
    if path.steps.is_empty() {
        return Err(Error::param("empty Lasso path"));
    }
    let mut best: Option<(f64, &PathStep, Vec<f64>)> = None;
    for step in &path.steps {
        let Some(LooEstimate { corrected: e, beta, .. }) = loo_error(phi, z, &step.active) else {
            log::debug!("skipping step with λ={} (interpolating)", step.lambda);
            continue;
        };
        if best.as_ref().is_none_or(|(b, _, _)| e < *b) {
            best = Some((e, step, beta));
        }
    }
    let (loo, step, beta) = best.ok_or_else(|| Error::Degenerate("every path step interpolates the data".into()))?;
    let coeffs: Vec<(u32, f64)> =
        step.active.iter().zip(&beta).filter(|(_, &b)| b != 0.0).map(|(&j, &b)| (j as u32, b)).collect();
    let residual_rel = relative_residual(phi, z, &coeffs);
    Ok(SparseFit { basis, coeffs, chosen_lambda: step.lambda, loo_error: loo, residual_rel })
}

fn relative_residual(phi: &Matrix, z: &[f64], coeffs: &[(u32, f64)]) -> f64 {
    let mut r = z.to_vec();
    for &(j, c) in coeffs {
        for (ri, &x) in r.iter_mut().zip(phi.col(j as usize)) {
            *ri -= c * x;
        }
    }
    let zn = norm2(z);
    if zn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / zn
    }
}

/// Fits one singular vector, sampled at physical coordinates, in every
/// candidate space and keeps the fit with the smallest LOO error. Ties go to
/// the sparser fit, then to Legendre.
pub fn fit_singular_vector(samples: &[(f64, f64)], candidates: &[BasisSpec]) -> Result<SparseFit> {
    if samples.is_empty() {
        return Err(Error::param("no samples to fit"));
    }
    if candidates.is_empty() {
        return Err(Error::param("no candidate bases"));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mut best: Option<SparseFit> = None;
    for spec in candidates {
        let phi = design_matrix(spec, &xs)?;
        let path = lars_lasso_path(&phi, &z)?;
        let fit = loo_select(&path, &phi, &z, *spec)?;
        best = Some(match best {
            None => fit,
            Some(cur) => {
                if prefer(&fit, &cur) {
                    fit
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.unwrap())
}

fn prefer(a: &SparseFit, b: &SparseFit) -> bool {
    let tol = 1e-12 * a.loo_error.max(b.loo_error);
    if (a.loo_error - b.loo_error).abs() > tol {
        return a.loo_error < b.loo_error;
    }
    if a.nnz() != b.nnz() {
        return a.nnz() < b.nnz();
    }
    a.basis.is_legendre() && !b.basis.is_legendre()
}
