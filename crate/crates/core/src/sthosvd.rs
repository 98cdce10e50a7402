//! Sequentially truncated higher-order SVD.
//!
//! Each mode is handled through the Gram matrix of the current, already
//! truncated, tensor and a symmetric eigendecomposition. The discarded
//! eigenvalue mass of every mode is capped at `ε²‖u‖²/d`, so the squared
//! errors of the `d` truncations sum to at most `ε²‖u‖²`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{fro_norm, DenseTensor, Matrix};

/// Order in which modes are truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeOrder {
    /// Modes 0, 1, …, d-1.
    #[default]
    Increasing,
    /// Largest extent first; ties broken by mode index.
    DecreasingSize,
}

#[derive(Debug, Clone)]
pub struct TuckerDecomposition {
    pub core: DenseTensor,
    /// Factor `k` is `I_k x r_k` with orthonormal columns.
    pub factors: Vec<Matrix>,
    /// Relative Frobenius error implied by the discarded spectrum.
    pub achieved_error: f64,
}

impl TuckerDecomposition {
    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    pub fn grid_shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }
}

pub fn sthosvd(u: &DenseTensor, epsilon: f64) -> Result<TuckerDecomposition> {
    sthosvd_ordered(u, epsilon, ModeOrder::Increasing)
}

pub fn sthosvd_ordered(u: &DenseTensor, epsilon: f64, order: ModeOrder) -> Result<TuckerDecomposition> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("precision must lie in (0, 1), got {epsilon}")));
    }
    if u.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("tensor contains non-finite entries"));
    }
    let norm = fro_norm(u);
    if norm == 0.0 {
        return Err(Error::Degenerate("cannot decompose an all-zero tensor".into()));
    }
    let d = u.order();
    let budget = epsilon * epsilon * norm * norm / d as f64;

    let mut modes: Vec<usize> = (0..d).collect();
    if order == ModeOrder::DecreasingSize {
        modes.sort_by(|&a, &b| u.shape()[b].cmp(&u.shape()[a]).then(a.cmp(&b)));
    }

    let mut factors: Vec<Option<Matrix>> = vec![None; d];
    let mut discarded_total = 0.0;
    let mut y = u.clone();
    for &k in &modes {
        let gram = y.mode_gram(k)?;
        let (values, vectors) = sorted_eigenpairs(&gram);
        let rank = truncation_rank(&values, budget);
        discarded_total += values[rank..].iter().sum::<f64>();
        let n = gram.rows();
        let w = Matrix::from_fn(n, rank, |i, j| vectors.get(i, j));
        y = y.mode_product(&w.transpose(), k)?;
        factors[k] = Some(w);
    }

    Ok(TuckerDecomposition {
        core: y,
        factors: factors.into_iter().map(Option::unwrap).collect(),
        achieved_error: discarded_total.max(0.0).sqrt() / norm,
    })
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending and clamped at
/// zero, each eigenvector signed so its largest-magnitude entry is positive.
pub(crate) fn sorted_eigenpairs(gram: &Matrix) -> (Vec<f64>, Matrix) {
    let n = gram.rows();
    let eig = SymmetricEigen::new(gram.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| {
        let col = eig.eigenvectors.column(order[j]);
        let mut pivot = 0;
        for r in 1..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            -col[i]
        } else {
            col[i]
        }
    });
    (values, vectors)
}

/// Smallest rank whose discarded tail fits in `budget`; a tie straddling
/// the cut keeps the extra component.
pub(crate) fn truncation_rank(values: &[f64], budget: f64) -> usize {
    let n = values.len();
    let mut tail = 0.0;
    let mut rank = n;
    for r in (1..n).rev() {
        tail += values[r];
        if tail > budget {
            break;
        }
        rank = r;
    }
    let tie_tol = 1e-12 * values[0];
    while rank < n && values[rank] > tie_tol && (values[rank - 1] - values[rank]).abs() <= tie_tol {
        rank += 1;
    }
    rank
}

/// `core ×_1 W^(1) ×_2 … ×_d W^(d)`.
pub fn reconstruct(dec: &TuckerDecomposition) -> Result<DenseTensor> {
    if dec.factors.len() != dec.core.order() {
        return Err(Error::shape(format!("{} factors for a core of order {}", dec.factors.len(), dec.core.order())));
    }
    let mut t = dec.core.clone();
    for (k, w) in dec.factors.iter().enumerate() {
        if w.cols() != dec.core.shape()[k] {
            return Err(Error::shape(format!(
                "factor {k} has {} columns, core extent is {}",
                w.cols(),
                dec.core.shape()[k]
            )));
        }
        t = t.mode_product(w, k)?;
    }
    Ok(t)
}

/// Magnitudes of all core entries, sorted descending.
pub fn singular_value_decay(dec: &TuckerDecomposition) -> Vec<f64> {
    let mut v: Vec<f64> = dec.core.data().iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}
