//! Re-estimation of the core against the original scattered data by
//! randomized (sketched) least squares, plus leverage-score and
//! self-convergence diagnostics.
//!
//! The design matrix `W` has one row per sample point and one column per
//! core entry (storage order): `W[q, j] = Π_k w^{(k)}_{j_k}(y^q_k)`. It is
//! generated a column at a time and mixed immediately, so only the sketched
//! `S × R` system is ever held in memory.

mod transform;

pub use transform::Transform;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PointCloud;
use crate::model::FunctionalTucker;
use crate::tensor::{norm2, DenseTensor, Matrix};
use transform::{Mixer, Workspace};

/// Default cap on the rows that feed the sketch.
pub const DEFAULT_WORKING_SUBSET: usize = 1 << 20;
/// Default oversampling `S / R`.
pub const DEFAULT_OVERSAMPLING: f64 = 2.5;
/// Held-out validation rows are capped at this count.
pub const MAX_VALIDATION_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchConfig {
    pub seed: u64,
    /// Rows drawn uniformly from the data to form `W`; `None` (`"all"` in
    /// config files) uses all.
    #[serde(with = "subset_serde")]
    pub working_subset: Option<usize>,
    /// Sampled rows `S`; `None` means `ceil(2.5·R)`.
    pub sample_rows: Option<usize>,
    pub transform: Transform,
    /// Fraction of the data held out to measure residuals.
    pub validation_fraction: f64,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            working_subset: Some(DEFAULT_WORKING_SUBSET),
            sample_rows: None,
            transform: Transform::Dct,
            validation_fraction: 0.1,
        }
    }
}

impl SketchConfig {
    pub fn rows_for(&self, r: usize) -> usize {
        self.sample_rows.unwrap_or_else(|| (DEFAULT_OVERSAMPLING * r as f64).ceil() as usize)
    }
}

mod subset_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Rows(usize),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("all"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Rows(n) => Ok(Some(n)),
            Repr::Word(w) if w == "all" => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("expected a row count or \"all\", got {w:?}"))),
        }
    }
}

/// `(M W, M u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedSystem {
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub x: Vec<f64>,
    /// The QR factor was numerically singular and the minimum-norm SVD
    /// solution was returned instead.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReestimateReport {
    pub transform: Transform,
    pub sample_rows: usize,
    pub sketch_rows: usize,
    pub working_rows: usize,
    pub validation_rows: usize,
    /// Relative validation residual `‖f(y) − u‖ / ‖u‖` with the old core.
    pub residual_before: Option<f64>,
    pub residual_after: Option<f64>,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reestimate {
    pub model: FunctionalTucker,
    pub report: ReestimateReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub s1: usize,
    pub s2: usize,
    /// `‖α(S2) − α(S1)‖ / ‖α(S2)‖`.
    pub delta: f64,
}

/// Dense design matrix `W` (`Q × R`) at point-major `points`.
pub fn build_design_rows(model: &FunctionalTucker, points: &[f64]) -> Result<Matrix> {
    let tables = model.mode_tables(points)?;
    let q = tables[0].rows();
    let cols: Vec<Vec<f64>> = (0..model.core().len())
        .into_par_iter()
        .map(|j| {
            let mut col = vec![0.0; q];
            design_column(&tables, model.ranks(), j, &mut col);
            col
        })
        .collect();
    Matrix::new(q, cols.len(), cols.concat())
}

fn design_column(tables: &[Matrix], ranks: &[usize], mut j: usize, col: &mut [f64]) {
    let j0 = j % ranks[0];
    j /= ranks[0];
    col.copy_from_slice(tables[0].col(j0));
    for (t, &r) in tables.iter().zip(ranks).skip(1) {
        let jk = j % r;
        j /= r;
        for (c, v) in col.iter_mut().zip(t.col(jk)) {
            *c *= v;
        }
    }
}

/// Sketches an explicit system `(w, u)` with `cfg.seed`, `cfg.transform` and
/// `S = cfg.rows_for(R)` (`cfg.working_subset` is not applied here).
pub fn sketch(w: &Matrix, u: &[f64], cfg: &SketchConfig) -> Result<SketchedSystem> {
    if u.len() != w.rows() {
        return Err(Error::shape(format!("{} right-hand side entries for {} rows", u.len(), w.rows())));
    }
    let mixer = Mixer::new(cfg.transform, w.rows(), cfg.rows_for(w.cols()), cfg.seed)?;
    let cols: Vec<Vec<f64>> = (0..w.cols())
        .into_par_iter()
        .map_init(Workspace::default, |ws, j| {
            let mut out = Vec::new();
            mixer.apply(w.col(j), &mut out, ws);
            out
        })
        .collect();
    let mut rhs = Vec::new();
    mixer.apply(u, &mut rhs, &mut Workspace::default());
    Ok(SketchedSystem { matrix: Matrix::new(mixer.rows(), w.cols(), cols.concat())?, rhs })
}

/// The fully mixed matrix `F D w` (all rows, no sampling), for diagnostics.
pub fn mix(w: &Matrix, transform: Transform, seed: u64) -> Result<Matrix> {
    let mixer = Mixer::new(transform, w.rows(), 1, seed)?;
    let cols: Vec<Vec<f64>> =
        (0..w.cols()).into_par_iter().map_init(Workspace::default, |ws, j| mixer.apply_full(w.col(j), ws)).collect();
    Matrix::new(mixer.full_rows(), w.cols(), cols.concat())
}

/// Least-squares solution of `a x ≈ b` by Householder QR, falling back to
/// the minimum-norm SVD solution when `a` is numerically rank deficient.
pub fn solve_least_squares(a: &Matrix, b: &[f64]) -> Result<LsSolution> {
    if b.len() != a.rows() {
        return Err(Error::shape(format!("{} right-hand side entries for {} rows", b.len(), a.rows())));
    }
    Ok(solve_dense(a.to_nalgebra(), DVector::from_column_slice(b)))
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> LsSolution {
    let (m, n) = a.shape();
    if m >= n {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        if max > 0.0 && diag.iter().all(|&v| v > 1e-12 * max) {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            let rhs = qtb.rows(0, n).into_owned();
            if let Some(x) = r.solve_upper_triangular(&rhs) {
                return LsSolution { x: x.as_slice().to_vec(), rank_deficient: false };
            }
        }
    }
    log::warn!("sketched {m}x{n} system is rank deficient; using the minimum-norm solution");
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * m.max(n) as f64 * f64::EPSILON;
    let x = svd.solve(&b, tol).expect("U and V were computed");
    LsSolution { x: x.as_slice().to_vec(), rank_deficient: true }
}

/// Squared row norms of the left singular vectors of `w` (thin SVD,
/// numerically zero singular values dropped). They sum to `rank(w)`.
pub fn leverage_scores(w: &Matrix) -> Result<Vec<f64>> {
    if w.rows() < w.cols() {
        return Err(Error::shape(format!("leverage scores need rows ≥ cols, got {}x{}", w.rows(), w.cols())));
    }
    let svd = w.to_nalgebra().svd(true, false);
    let u = svd.u.expect("U was requested");
    let smax = svd.singular_values.max();
    let tol = smax * w.rows() as f64 * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    Ok((0..w.rows()).map(|q| keep.iter().map(|&i| u[(q, i)] * u[(q, i)]).sum()).collect())
}

/// Held-out validation rows and working rows drawn from the rest.
struct DataSplit {
    work: Vec<usize>,
    valid: Vec<usize>,
}

fn split_data(q: usize, cfg: &SketchConfig) -> Result<DataSplit> {
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::param(format!("validation fraction {} outside [0, 1)", cfg.validation_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n_valid = ((cfg.validation_fraction * q as f64).floor() as usize).min(MAX_VALIDATION_ROWS);
    let mut valid = index::sample(&mut rng, q, n_valid).into_vec();
    valid.sort_unstable();
    let mut rest = Vec::with_capacity(q - n_valid);
    let mut it = valid.iter().peekable();
    for i in 0..q {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            rest.push(i);
        }
    }
    let work = match cfg.working_subset {
        Some(0) => return Err(Error::param("working subset must be positive")),
        Some(w) if w < rest.len() => {
            let mut pick: Vec<usize> = index::sample(&mut rng, rest.len(), w).into_iter().map(|i| rest[i]).collect();
            pick.sort_unstable();
            pick
        }
        _ => rest,
    };
    Ok(DataSplit { work, valid })
}

/// Mixed, sampled design and data for the working rows.
fn sketch_model(
    model: &FunctionalTucker,
    data: &PointCloud,
    rows: &[usize],
    s: usize,
    cfg: &SketchConfig,
) -> Result<(Mixer, DMatrix<f64>, DVector<f64>)> {
    let sub = data.select(rows);
    let tables = model.mode_tables(sub.points())?;
    let mixer = Mixer::new(cfg.transform, rows.len(), s, cfg.seed)?;
    let q = rows.len();
    let ranks = model.ranks();
    let cols: Vec<Vec<f64>> = (0..model.core().len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; q], Workspace::default()),
            |(col, ws), j| {
                design_column(&tables, ranks, j, col);
                let mut out = Vec::new();
                mixer.apply(col, &mut out, ws);
                out
            },
        )
        .collect();
    let a = DMatrix::from_vec(mixer.rows(), cols.len(), cols.concat());
    let mut rhs = Vec::new();
    mixer.apply(sub.values(), &mut rhs, &mut Workspace::default());
    Ok((mixer, a, DVector::from_vec(rhs)))
}

fn check_dims(model: &FunctionalTucker, data: &PointCloud) -> Result<()> {
    if data.dim() != model.order() {
        return Err(Error::shape(format!("{}-dimensional data for a {}-way model", data.dim(), model.order())));
    }
    Ok(())
}

fn validation_residual(model: &FunctionalTucker, valid: &PointCloud) -> Result<f64> {
    let pred = model.evaluate_batch(valid.points())?;
    let diff: Vec<f64> = pred.iter().zip(valid.values()).map(|(a, b)| a - b).collect();
    let denom = norm2(valid.values());
    if denom == 0.0 {
        return Err(Error::Degenerate("validation values are all zero".into()));
    }
    Ok(norm2(&diff) / denom)
}

/// Replaces the core of `model` by the sketched least-squares fit to `data`.
pub fn reestimate_core(model: &FunctionalTucker, data: &PointCloud, cfg: &SketchConfig) -> Result<Reestimate> {
    check_dims(model, data)?;
    let r = model.core().len();
    let s = cfg.rows_for(r);
    if s <= r {
        return Err(Error::param(format!("sampled rows S = {s} must exceed the core size R = {r}")));
    }
    let split = split_data(data.len(), cfg)?;
    if s > cfg.transform.padded_len(split.work.len()) {
        return Err(Error::param(format!("S = {s} exceeds the {} working rows available", split.work.len())));
    }
    let (mixer, a, b) = sketch_model(model, data, &split.work, s, cfg)?;
    let sol = solve_dense(a, b);
    let core = DenseTensor::new(model.ranks().to_vec(), sol.x)?;
    let updated = model.with_core(core)?;

    let (before, after) = if split.valid.is_empty() {
        (None, None)
    } else {
        let valid = data.select(&split.valid);
        (Some(validation_residual(model, &valid)?), Some(validation_residual(&updated, &valid)?))
    };
    let report = ReestimateReport {
        transform: cfg.transform,
        sample_rows: s,
        sketch_rows: mixer.rows(),
        working_rows: mixer.input_len(),
        validation_rows: split.valid.len(),
        residual_before: before,
        residual_after: after,
        rank_deficient: sol.rank_deficient,
    };
    Ok(Reestimate { model: updated, report })
}

/// Relative change of the re-estimated core between consecutive entries of
/// `s_values`. All solves share one seeded sketch, so the rows sampled for a
/// smaller `S` are a subset of those for a larger one.
pub fn self_convergence(
    model: &FunctionalTucker,
    data: &PointCloud,
    s_values: &[usize],
    cfg: &SketchConfig,
) -> Result<Vec<ConvergencePoint>> {
    check_dims(model, data)?;
    if s_values.len() < 2 {
        return Err(Error::param("self-convergence needs at least two S values"));
    }
    if s_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("S values must be non-decreasing"));
    }
    let r = model.core().len();
    if s_values[0] <= r {
        return Err(Error::param(format!("every S must exceed R = {r}, got {}", s_values[0])));
    }
    let split = split_data(data.len(), cfg)?;
    let s_max = *s_values.last().unwrap();
    let (_, a, b) = sketch_model(model, data, &split.work, s_max, cfg)?;
    let per = cfg.transform.rows_per_sample();
    let solutions: Vec<Vec<f64>> = s_values
        .iter()
        .map(|&s| {
            let m = s * per;
            solve_dense(a.rows(0, m).into_owned(), b.rows(0, m).into_owned()).x
        })
        .collect();
    Ok(s_values
        .windows(2)
        .zip(solutions.windows(2))
        .map(|(s, x)| {
            let diff: Vec<f64> = x[1].iter().zip(&x[0]).map(|(p, q)| p - q).collect();
            let (num, den) = (norm2(&diff), norm2(&x[1]));
            ConvergencePoint { s1: s[0], s2: s[1], delta: if num == 0.0 { 0.0 } else { num / den } }
        })
        .collect())
}

#[cfg(test)]
mod tests;
#[cfg(test)]
pub(crate) mod tests_support;
