//! Orthonormal univariate approximation spaces.
//!
//! Two families are provided, both orthonormal with respect to the uniform
//! probability measure on the physical interval `[a, b]`:
//!
//! * `Legendre { p }`: normalized Legendre polynomials of degree `0..=p`,
//!   `L̂_n = √(2n+1) P_n`, evaluated by the three-term recurrence.
//! * `Wavelet { s, p }`: piecewise-polynomial multiwavelets. Level 0 is the
//!   Legendre block of degree `p`; level `ℓ = 1..=s` holds `p+1` mother
//!   functions on each of `2^(ℓ-1)` dyadic cells. Mother functions are
//!   piecewise polynomials of degree `p` on the two halves of a cell and
//!   orthogonal to every polynomial of degree `≤ p` on the cell, so the
//!   space `W_{s,p}` is exactly the piecewise polynomials of degree `p` on
//!   `2^s` uniform cells, with `n = (p+1) 2^s` functions.
//!
//! Basis index layout for wavelets: `0..=p` is level 0; level `ℓ`, cell
//! `m`, function `i` sits at `(p+1)(2^(ℓ-1) + m) + i`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative slack beyond the domain that is clamped rather than rejected.
pub const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Legendre { p: usize },
    Wavelet { s: usize, p: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(flatten)]
    pub family: Family,
    pub domain: (f64, f64),
}

impl BasisSpec {
    pub fn legendre(p: usize, domain: (f64, f64)) -> Result<Self> {
        Self::new(Family::Legendre { p }, domain)
    }

    pub fn wavelet(s: usize, p: usize, domain: (f64, f64)) -> Result<Self> {
        Self::new(Family::Wavelet { s, p }, domain)
    }

    pub fn new(family: Family, domain: (f64, f64)) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::param(format!("basis domain [{a}, {b}] is not a proper interval")));
        }
        if let Family::Wavelet { s, .. } = family {
            if s > 20 {
                return Err(Error::param(format!("wavelet resolution {s} is unreasonably large")));
            }
        }
        Ok(Self { family, domain })
    }

    /// Same family on a different interval.
    pub fn with_domain(&self, domain: (f64, f64)) -> Result<Self> {
        Self::new(self.family, domain)
    }

    pub fn dim(&self) -> usize {
        match self.family {
            Family::Legendre { p } => p + 1,
            Family::Wavelet { s, p } => (p + 1) << s,
        }
    }

    pub fn is_legendre(&self) -> bool {
        matches!(self.family, Family::Legendre { .. })
    }

    /// Affine map of a physical coordinate onto `[-1, 1]`.
    pub fn to_reference(&self, x: f64) -> Result<f64> {
        let (a, b) = self.domain;
        let slack = DOMAIN_SLACK * (b - a);
        if !(x >= a - slack && x <= b + slack) {
            return Err(Error::Domain { value: x, lo: a, hi: b });
        }
        if x < a || x > b {
            log::warn!("coordinate {x} clamped into [{a}, {b}]");
        }
        let t = 2.0 * (x - a) / (b - a) - 1.0;
        Ok(t.clamp(-1.0, 1.0))
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes all basis values at `x` into `out` (length `dim()`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        let t = self.to_reference(x)?;
        self.eval_reference(t, out);
        Ok(())
    }

    /// Basis values at a reference coordinate `t ∈ [-1, 1]`.
    pub fn eval_reference(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self.family {
            Family::Legendre { p } => legendre_orthonormal(t, &mut out[..p + 1]),
            Family::Wavelet { s, p } => eval_wavelet(s, p, t, out),
        }
    }
}

/// Orthonormal Legendre values `L̂_0..L̂_{len-1}` at `t`.
pub(crate) fn legendre_orthonormal(t: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    let mut prev = 1.0;
    out[0] = 1.0;
    if n > 1 {
        let mut cur = t;
        out[1] = 3f64.sqrt() * t;
        for k in 1..n - 1 {
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
            out[k + 1] = (2.0 * kf + 3.0).sqrt() * cur;
        }
    }
}

fn eval_wavelet(s: usize, p: usize, t: f64, out: &mut [f64]) {
    let np = p + 1;
    out.iter_mut().for_each(|v| *v = 0.0);
    legendre_orthonormal(t, &mut out[..np]);
    if s == 0 {
        return;
    }
    let mother = mother_wavelets(p);
    let unit = 0.5 * (t + 1.0);
    let mut local = vec![0.0; np];
    for level in 1..=s {
        let cells = 1usize << (level - 1);
        let pos = unit * cells as f64;
        let m = (pos.floor() as usize).min(cells - 1);
        let tau = pos - m as f64;
        mother.eval(tau, &mut local);
        let scale = (cells as f64).sqrt();
        let base = np * (cells + m);
        for i in 0..np {
            out[base + i] = scale * local[i];
        }
    }
}

/// Mother multiwavelets of one degree, stored as coefficients on the
/// orthonormal Legendre basis of each half cell.
#[derive(Debug)]
struct MotherWavelets {
    p: usize,
    /// `left[i * (p+1) + j]`: weight of half-basis function `j` on `[0, 1/2)`.
    left: Vec<f64>,
    right: Vec<f64>,
}

impl MotherWavelets {
    fn build(p: usize) -> Self {
        let np = p + 1;
        let (nodes, weights) = gauss_legendre(np + 1);
        let mut a = vec![0.0; np];
        let mut b = vec![0.0; np];
        // parent[m] = [left coeffs; right coeffs] of the cell-level Legendre function m
        let mut parent = vec![vec![0.0; 2 * np]; np];
        for (&u, &w) in nodes.iter().zip(&weights) {
            legendre_orthonormal(u, &mut b);
            legendre_orthonormal(0.5 * (u - 1.0), &mut a);
            for m in 0..np {
                for j in 0..np {
                    parent[m][j] += w * std::f64::consts::SQRT_2 / 4.0 * a[m] * b[j];
                }
            }
            legendre_orthonormal(0.5 * (u + 1.0), &mut a);
            for m in 0..np {
                for j in 0..np {
                    parent[m][np + j] += w * std::f64::consts::SQRT_2 / 4.0 * a[m] * b[j];
                }
            }
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(np);
        for i in 0..np {
            let mut h = vec![0.0; 2 * np];
            h[np + i] = 1.0;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in parent.iter().chain(basis.iter()) {
                    let c: f64 = q.iter().zip(&h).map(|(x, y)| x * y).sum();
                    h.iter_mut().zip(q).for_each(|(hv, qv)| *hv -= c * qv);
                }
            }
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            h.iter_mut().for_each(|v| *v /= norm);
            basis.push(h);
        }
        let mut left = Vec::with_capacity(np * np);
        let mut right = Vec::with_capacity(np * np);
        for h in &basis {
            left.extend_from_slice(&h[..np]);
            right.extend_from_slice(&h[np..]);
        }
        Self { p, left, right }
    }

    /// Mother function values at `tau ∈ [0, 1]`.
    fn eval(&self, tau: f64, out: &mut [f64]) {
        let np = self.p + 1;
        let (u, coeffs) =
            if tau < 0.5 { (4.0 * tau - 1.0, &self.left) } else { ((4.0 * tau - 3.0).min(1.0), &self.right) };
        let mut half = vec![0.0; np];
        legendre_orthonormal(u, &mut half);
        for i in 0..np {
            let row = &coeffs[i * np..(i + 1) * np];
            out[i] = std::f64::consts::SQRT_2 * row.iter().zip(&half).map(|(c, h)| c * h).sum::<f64>();
        }
    }
}

fn mother_wavelets(p: usize) -> Arc<MotherWavelets> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<MotherWavelets>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.read().unwrap().get(&p) {
        return Arc::clone(m);
    }
    let built = Arc::new(MotherWavelets::build(p));
    let mut w = cache.write().unwrap();
    Arc::clone(w.entry(p).or_insert(built))
}

/// `Q x n` matrix of basis values, row `q` evaluated at `points[q]`.
pub fn design_matrix(spec: &BasisSpec, points: &[f64]) -> Result<Matrix> {
    if points.is_empty() {
        return Err(Error::param("design matrix needs at least one point"));
    }
    let n = spec.dim();
    let q = points.len();
    let mut data = vec![0.0; q * n];
    let mut row = vec![0.0; n];
    for (r, &x) in points.iter().enumerate() {
        spec.eval_into(x, &mut row)?;
        for (j, &v) in row.iter().enumerate() {
            data[r + q * j] = v;
        }
    }
    Matrix::new(q, n, data)
}

/// Reference coordinate of node `i` (zero-based) on a grid of `n`
/// equispaced nodes spanning `[-1, 1]`.
pub fn grid_to_reference(i: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::param(format!("grid needs at least 2 nodes, got {n}")));
    }
    if i >= n {
        return Err(Error::param(format!("grid index {i} out of range for {n} nodes")));
    }
    if i == n - 1 {
        return Ok(1.0);
    }
    Ok(-1.0 + 2.0 * i as f64 / (n - 1) as f64)
}

/// Physical coordinate of node `i` on an equispaced grid over `[a, b]`.
pub fn grid_coordinate(i: usize, n: usize, domain: (f64, f64)) -> f64 {
    let (a, b) = domain;
    if n < 2 || i == 0 {
        return a;
    }
    if i == n - 1 {
        return b;
    }
    a + (b - a) * i as f64 / (n - 1) as f64
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Unnormalized `P_n(x)` and `P_n'(x)`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
