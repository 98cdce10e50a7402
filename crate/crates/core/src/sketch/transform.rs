//! Randomized mixing `x ↦ √(N/S)·P F D x`: seeded ±1 signs `D`, an
//! orthogonal fast transform `F`, and a seeded uniform row selection `P`.
//!
//! The row selection is the prefix of one seeded permutation, so for a fixed
//! seed the rows kept for a smaller `S` are a subset of those kept for a
//! larger one.

use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Orthonormal DCT-II; any length.
    #[default]
    Dct,
    /// Walsh–Hadamard; input zero-padded to a power of two.
    Wht,
    /// Unitary complex FFT; each sampled row contributes its real and
    /// imaginary parts as two real rows.
    Fft,
}

impl FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(Self::Dct),
            "wht" => Ok(Self::Wht),
            "fft" => Ok(Self::Fft),
            _ => Err(Error::param(format!("unknown transform {s:?} (dct, wht, fft)"))),
        }
    }
}

impl Transform {
    /// Length the input is padded to.
    pub fn padded_len(self, q: usize) -> usize {
        match self {
            Transform::Wht => q.next_power_of_two(),
            Transform::Dct | Transform::Fft => q,
        }
    }

    /// Real rows produced per sampled row.
    pub fn rows_per_sample(self) -> usize {
        match self {
            Transform::Fft => 2,
            _ => 1,
        }
    }
}

pub(crate) struct Mixer {
    transform: Transform,
    q: usize,
    q_pad: usize,
    signs: Vec<f64>,
    picks: Vec<usize>,
    scale: f64,
    fft: Option<Arc<dyn Fft<f64>>>,
    /// DCT post-twiddle `e^{-iπk/2N}·c_k/2` with orthonormal weights `c_k`.
    twiddle: Vec<Complex<f64>>,
}

#[derive(Default)]
pub(crate) struct Workspace {
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    real: Vec<f64>,
}

impl Mixer {
    /// Mixer for inputs of length `q` keeping `s` sampled rows.
    pub fn new(transform: Transform, q: usize, s: usize, seed: u64) -> Result<Self> {
        if q == 0 || s == 0 {
            return Err(Error::param("sketch needs at least one input and one sampled row"));
        }
        let q_pad = transform.padded_len(q);
        if s > q_pad {
            return Err(Error::param(format!("cannot sample {s} rows from {q_pad} (padded) rows")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..q).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut perm: Vec<usize> = (0..q_pad).collect();
        perm.shuffle(&mut rng);
        perm.truncate(s);
        let mut planner = FftPlanner::new();
        let (fft, twiddle) = match transform {
            Transform::Dct => {
                let n = q as f64;
                let tw = (0..q)
                    .map(|k| {
                        let c = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                        Complex::from_polar(0.5 * c, -std::f64::consts::PI * k as f64 / (2.0 * n))
                    })
                    .collect();
                (Some(planner.plan_fft_forward(2 * q)), tw)
            }
            Transform::Fft => (Some(planner.plan_fft_forward(q)), Vec::new()),
            Transform::Wht => (None, Vec::new()),
        };
        Ok(Self { transform, q, q_pad, signs, picks: perm, scale: (q_pad as f64 / s as f64).sqrt(), fft, twiddle })
    }

    pub fn input_len(&self) -> usize {
        self.q
    }

    /// Real rows of the sketched output.
    pub fn rows(&self) -> usize {
        self.picks.len() * self.transform.rows_per_sample()
    }

    /// Real rows of the unsampled mixed output.
    pub fn full_rows(&self) -> usize {
        self.q_pad * self.transform.rows_per_sample()
    }

    /// `F D x` for every output row, written to `ws.real` (Re/Im interleaved
    /// for the complex FFT).
    fn mix_into(&self, x: &[f64], ws: &mut Workspace) {
        debug_assert_eq!(x.len(), self.q);
        match self.transform {
            Transform::Wht => {
                ws.real.clear();
                ws.real.extend(x.iter().zip(&self.signs).map(|(a, s)| a * s));
                ws.real.resize(self.q_pad, 0.0);
                fwht(&mut ws.real);
                let norm = 1.0 / (self.q_pad as f64).sqrt();
                ws.real.iter_mut().for_each(|v| *v *= norm);
            }
            Transform::Dct => {
                let n = self.q;
                ws.buf.clear();
                ws.buf.resize(2 * n, Complex::default());
                for (i, (a, s)) in x.iter().zip(&self.signs).enumerate() {
                    let v = Complex::new(a * s, 0.0);
                    ws.buf[i] = v;
                    ws.buf[2 * n - 1 - i] = v;
                }
                self.run_fft(ws);
                ws.real.clear();
                ws.real.extend(ws.buf[..n].iter().zip(&self.twiddle).map(|(v, t)| (v * t).re));
            }
            Transform::Fft => {
                ws.buf.clear();
                ws.buf.extend(x.iter().zip(&self.signs).map(|(a, s)| Complex::new(a * s, 0.0)));
                self.run_fft(ws);
                let norm = 1.0 / (self.q as f64).sqrt();
                ws.real.clear();
                ws.real.extend(ws.buf.iter().flat_map(|v| [v.re * norm, v.im * norm]));
            }
        }
    }

    fn run_fft(&self, ws: &mut Workspace) {
        let fft = self.fft.as_ref().expect("transform has an FFT plan");
        ws.scratch.resize(fft.get_inplace_scratch_len(), Complex::default());
        fft.process_with_scratch(&mut ws.buf, &mut ws.scratch);
    }

    /// Sketched rows `√(N/S)·P F D x`.
    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>, ws: &mut Workspace) {
        self.mix_into(x, ws);
        out.clear();
        let per = self.transform.rows_per_sample();
        for &p in &self.picks {
            for c in 0..per {
                out.push(self.scale * ws.real[p * per + c]);
            }
        }
    }

    /// The whole mixed vector `F D x` (no sampling, no rescaling).
    pub fn apply_full(&self, x: &[f64], ws: &mut Workspace) -> Vec<f64> {
        self.mix_into(x, ws);
        ws.real.clone()
    }
}

/// In-place unnormalized fast Walsh–Hadamard transform (length a power of two).
fn fwht(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (u, v) in a.iter_mut().zip(b.iter_mut()) {
                let (s, t) = (*u + *v, *u - *v);
                *u = s;
                *v = t;
            }
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let c = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                c * x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n).cos())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn dct_matches_definition() {
        let x: Vec<f64> = (0..13).map(|i| ((i * 7) % 5) as f64 - 1.5).collect();
        let m = Mixer::new(Transform::Dct, 13, 13, 3).unwrap();
        let mut ws = Workspace::default();
        let got = m.apply_full(&x, &mut ws);
        let dx: Vec<f64> = x.iter().zip(&m.signs).map(|(a, s)| a * s).collect();
        for (a, b) in got.iter().zip(naive_dct(&dx)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wht_matches_hadamard_matrix() {
        let mut x = vec![1.0, 2.0, -1.0, 0.5];
        fwht(&mut x);
        assert_eq!(x, vec![2.5, -2.5, 3.5, 0.5]);
    }

    #[test]
    fn isometry_for_every_transform() {
        for t in [Transform::Dct, Transform::Wht, Transform::Fft] {
            for q in [1usize, 2, 7, 64, 100] {
                let x: Vec<f64> = (0..q).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
                let m = Mixer::new(t, q, 1, 11).unwrap();
                let y = m.apply_full(&x, &mut Workspace::default());
                assert_eq!(y.len(), m.full_rows());
                let (nx, ny) = (x.iter().map(|v| v * v).sum::<f64>(), y.iter().map(|v| v * v).sum::<f64>());
                assert!((nx.sqrt() - ny.sqrt()).abs() <= 1e-10 * nx.sqrt().max(1.0), "{t:?} q={q}");
            }
        }
    }

    #[test]
    fn sampling_is_nested_and_seeded() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let small = Mixer::new(Transform::Fft, 50, 10, 4).unwrap();
        let big = Mixer::new(Transform::Fft, 50, 30, 4).unwrap();
        let mut ws = Workspace::default();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        small.apply(&x, &mut a, &mut ws);
        big.apply(&x, &mut b, &mut ws);
        assert_eq!(a.len(), 20);
        let rescale = (10.0f64 / 30.0).sqrt();
        for (u, v) in a.iter().zip(&b) {
            assert!((u * rescale - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
        assert!(Mixer::new(Transform::Dct, 5, 6, 0).is_err());
        assert!(Mixer::new(Transform::Wht, 5, 6, 0).is_ok());
    }
}
