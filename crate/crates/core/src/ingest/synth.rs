//! Seeded synthetic fields on the unit box, standing in for simulation data.
//!
//! * `smooth`: `exp(-Σ a_k y_k)·(1 + c/2·cos(π Σ b_k y_k + φ))` — multilinear
//!   rank at most 3, exactly 1 when the coupling `c` is zero.
//! * `flame-front`: progress variable `½(1 + tanh((y_1 − x_f)/δ))` of a
//!   statistically planar front translating along `y_3` (when present) and
//!   wrinkled along the remaining modes.
//! * `multiscale`: a geometric sum of separable oscillations at doubling
//!   frequencies plus a Gaussian bump.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PointCloud, StructuredGrid};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MAX_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Smooth,
    FlameFront,
    Multiscale,
}

impl FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "flame-front" => Ok(Self::FlameFront),
            "multiscale" => Ok(Self::Multiscale),
            _ => Err(Error::param(format!("unknown field kind {s:?} (smooth, flame-front, multiscale)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Weight of the non-separable part; zero makes smooth fields rank 1
    /// and flame fronts flat.
    pub coupling: f64,
    /// Flame thickness `δ`.
    pub thickness: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { coupling: 1.0, thickness: 0.06, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    kind: FieldKind,
    dim: usize,
    params: SynthParams,
    rates: Vec<f64>,
    freqs: Vec<f64>,
    phase: f64,
    /// `(mode, wavenumber, amplitude, phase)` wrinkles or oscillation terms.
    waves: Vec<(usize, f64, f64, f64)>,
    centre: Vec<f64>,
}

impl Field {
    pub fn new(kind: FieldKind, dim: usize, params: SynthParams, seed: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_ORDER {
            return Err(Error::param(format!("field dimension {dim} outside 1..={MAX_ORDER}")));
        }
        if kind == FieldKind::FlameFront && dim < 2 {
            return Err(Error::param("flame-front fields need at least 2 dimensions"));
        }
        if !(params.thickness > 0.0) || !(params.noise >= 0.0) || !params.coupling.is_finite() {
            return Err(Error::param("synthetic field parameters must be finite, thickness > 0, noise ≥ 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rates = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let freqs = (0..dim).map(|_| rng.random_range(0.5..1.0)).collect();
        let phase = rng.random_range(0.0..2.0 * PI);
        let mut waves = Vec::new();
        match kind {
            FieldKind::Smooth => {}
            FieldKind::FlameFront => {
                for k in (1..dim).filter(|&k| k != 2) {
                    for m in 1..=3 {
                        let amp = 0.04 / m as f64 * rng.random_range(0.5..1.0);
                        waves.push((k, m as f64, amp, rng.random_range(0.0..2.0 * PI)));
                    }
                }
            }
            FieldKind::Multiscale => {
                for m in 0..4 {
                    for k in 0..dim {
                        let f = (1u32 << m) as f64 * rng.random_range(0.75..1.25);
                        waves.push((k, f, 0.5f64.powi(m), rng.random_range(0.0..2.0 * PI)));
                    }
                }
            }
        }
        let centre = (0..dim).map(|_| rng.random_range(0.3..0.7)).collect();
        Ok(Self { kind, dim, params, rates, freqs, phase, waves, centre })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    /// Noise-free field value at `y ∈ [0, 1]^d`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        let c = self.params.coupling;
        match self.kind {
            FieldKind::Smooth => {
                let decay: f64 = self.rates.iter().zip(y).map(|(a, x)| a * x).sum();
                let arg: f64 = self.freqs.iter().zip(y).map(|(b, x)| b * x).sum();
                (-decay).exp() * (1.0 + 0.5 * c * (PI * arg + self.phase).cos())
            }
            FieldKind::FlameFront => {
                let x_f = self.front_position(y);
                0.5 * (1.0 + ((y[0] - x_f) / self.params.thickness).tanh())
            }
            FieldKind::Multiscale => {
                let mut sum = 0.0;
                for term in self.waves.chunks(self.dim) {
                    let mut prod = term[0].2;
                    for &(k, f, _, ph) in term {
                        prod *= (2.0 * PI * f * y[k] + ph).cos();
                    }
                    sum += prod;
                }
                let r2: f64 = self.centre.iter().zip(y).map(|(m, x)| (x - m).powi(2)).sum();
                sum + c * (-r2 / (2.0 * 0.1 * 0.1)).exp()
            }
        }
    }

    /// Front location `x_f` along `y_1` for a flame-front field.
    pub fn front_position(&self, y: &[f64]) -> f64 {
        let c = self.params.coupling;
        let travel = if self.dim > 2 { 0.3 * c * (y[2] - 0.5) } else { 0.0 };
        let wrinkle: f64 = self.waves.iter().map(|&(k, m, a, ph)| a * (2.0 * PI * m * y[k] + ph).sin()).sum();
        0.5 + travel + c * wrinkle
    }
}

/// Samples the field on every node of `grid`, adding seeded noise.
pub fn synth_grid(field: &Field, grid: &StructuredGrid, seed: u64) -> Result<DenseTensor> {
    if grid.order() != field.dim() {
        return Err(Error::shape(format!("{}-way grid for a {}-dimensional field", grid.order(), field.dim())));
    }
    let mut t = grid.sample(|y| field.eval(y));
    add_noise(t.data_mut(), field.params.noise, seed);
    Ok(t)
}

/// `q` seeded uniform samples of the field on the unit box. The `2^d` box
/// corners come first (when `q` allows) so the cloud spans the whole box.
pub fn synth_cloud(field: &Field, q: usize, seed: u64) -> Result<PointCloud> {
    let d = field.dim();
    if q == 0 {
        return Err(Error::param("point count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(q * d);
    let corners = if q >= 1 << d { 1usize << d } else { 0 };
    for c in 0..corners {
        points.extend((0..d).map(|k| ((c >> k) & 1) as f64));
    }
    points.extend((0..(q - corners) * d).map(|_| rng.random::<f64>()));
    let mut values: Vec<f64> = points.par_chunks(d).map(|y| field.eval(y)).collect();
    add_noise(&mut values, field.params.noise, rng.random());
    PointCloud::new(d, points, values)
}

fn add_noise(values: &mut [f64], sigma: f64, seed: u64) {
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, sigma).expect("sigma is positive");
        for v in values {
            *v += normal.sample(&mut rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sthosvd::sthosvd;

    #[test]
    fn smooth_field_is_low_rank() {
        let f = Field::new(FieldKind::Smooth, 3, SynthParams::default(), 4).unwrap();
        let t = synth_grid(&f, &StructuredGrid::unit(vec![50; 3]).unwrap(), 0).unwrap();
        let dec = sthosvd(&t, 1e-4).unwrap();
        assert!(dec.ranks().iter().all(|&r| r <= 6), "{:?}", dec.ranks());
    }

    #[test]
    fn zero_coupling_is_rank_one() {
        let p = SynthParams { coupling: 0.0, ..SynthParams::default() };
        for kind in [FieldKind::Smooth, FieldKind::FlameFront] {
            let f = Field::new(kind, 3, p, 4).unwrap();
            let t = synth_grid(&f, &StructuredGrid::unit(vec![12, 10, 8]).unwrap(), 0).unwrap();
            assert_eq!(sthosvd(&t, 1e-6).unwrap().ranks(), vec![1, 1, 1], "{kind:?}");
        }
    }

    #[test]
    fn seeds_reproduce() {
        let p = SynthParams { noise: 0.01, ..SynthParams::default() };
        for kind in [FieldKind::Smooth, FieldKind::FlameFront, FieldKind::Multiscale] {
            let a = synth_cloud(&Field::new(kind, 3, p, 1).unwrap(), 100, 2).unwrap();
            let b = synth_cloud(&Field::new(kind, 3, p, 1).unwrap(), 100, 2).unwrap();
            assert_eq!(a, b);
            let c = synth_cloud(&Field::new(kind, 3, p, 1).unwrap(), 100, 3).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn flame_front_spans_burnt_and_unburnt() {
        let f = Field::new(FieldKind::FlameFront, 3, SynthParams::default(), 0).unwrap();
        let t = synth_grid(&f, &StructuredGrid::unit(vec![40, 20, 10]).unwrap(), 0).unwrap();
        let (lo, hi) = t.data().iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo < 0.01 && hi > 0.99);
        for y2 in [0.0, 0.4, 1.0] {
            let x = f.front_position(&[0.0, y2, 0.5]);
            assert!((f.eval(&[x, y2, 0.5]) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cloud_includes_corners() {
        let f = Field::new(FieldKind::Multiscale, 2, SynthParams::default(), 0).unwrap();
        let pc = synth_cloud(&f, 10, 0).unwrap();
        assert_eq!(pc.bounding_box(), vec![(0.0, 1.0), (0.0, 1.0)]);
        assert!(Field::new(FieldKind::FlameFront, 1, SynthParams::default(), 0).is_err());
        assert_eq!("flame-front".parse::<FieldKind>().unwrap(), FieldKind::FlameFront);
    }
}
