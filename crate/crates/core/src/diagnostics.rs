//! Diagnostic outputs: core decay, leverage-score histograms before and
//! after mixing, self-convergence curves and 2-D slice images.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::PointCloud;
use crate::model::FunctionalTucker;
use crate::pipeline::Slice;
use crate::sketch::{build_design_rows, leverage_scores, mix, ConvergencePoint, Transform};

/// `rank,value,relative` rows for a descending decay curve.
pub fn write_decay_csv<W: Write>(mut w: W, decay: &[f64]) -> Result<()> {
    writeln!(w, "rank,value,relative")?;
    let top = decay.first().copied().unwrap_or(0.0);
    for (i, v) in decay.iter().enumerate() {
        let rel = if top > 0.0 { v / top } else { 0.0 };
        writeln!(w, "{},{v},{rel}", i + 1)?;
    }
    Ok(())
}

/// Equal-width histogram on `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::param(format!("histogram needs bins > 0 and hi > lo, got {bins} on [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v >= lo && v <= hi {
                counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Leverage scores of the design matrix at a data subset, before and after
/// mixing with `transform`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageStudy {
    pub rows: usize,
    pub columns: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl LeverageStudy {
    /// Max over mean of the scores, a coherence measure (1 is perfectly even).
    pub fn max_mean_ratio(scores: &[f64]) -> f64 {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        scores.iter().copied().fold(0.0, f64::max) / mean
    }

    /// Common-range histograms of both score sets.
    pub fn histograms(&self, bins: usize) -> Result<(Histogram, Histogram)> {
        let hi = self.before.iter().chain(&self.after).copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        Ok((Histogram::new(&self.before, 0.0, hi, bins)?, Histogram::new(&self.after, 0.0, hi, bins)?))
    }
}

/// Scores for the first `rows` points of `data` (the SVD is dense, so keep
/// `rows` modest).
pub fn leverage_study(
    model: &FunctionalTucker,
    data: &PointCloud,
    rows: usize,
    transform: Transform,
    seed: u64,
) -> Result<LeverageStudy> {
    let n = rows.min(data.len());
    let idx: Vec<usize> = (0..n).collect();
    let w = build_design_rows(model, data.select(&idx).points())?;
    if w.rows() < w.cols() {
        return Err(Error::param(format!("leverage study needs at least R = {} rows, got {}", w.cols(), w.rows())));
    }
    let before = leverage_scores(&w)?;
    let after = leverage_scores(&mix(&w, transform, seed)?)?;
    Ok(LeverageStudy { rows: w.rows(), columns: w.cols(), before, after })
}

/// `bin_lo,bin_hi,count_before,count_after`.
pub fn write_histogram_csv<W: Write>(mut w: W, before: &Histogram, after: &Histogram) -> Result<()> {
    if before.edges != after.edges {
        return Err(Error::shape("histograms must share bin edges"));
    }
    writeln!(w, "bin_lo,bin_hi,count_before,count_after")?;
    for i in 0..before.counts.len() {
        writeln!(w, "{},{},{},{}", before.edges[i], before.edges[i + 1], before.counts[i], after.counts[i])?;
    }
    Ok(())
}

/// `s1,s2,delta`.
pub fn write_convergence_csv<W: Write>(mut w: W, points: &[ConvergencePoint]) -> Result<()> {
    writeln!(w, "s1,s2,delta")?;
    for p in points {
        writeln!(w, "{},{},{}", p.s1, p.s2, p.delta)?;
    }
    Ok(())
}

/// `x,y,value` rows of a slice.
pub fn write_slice_csv<W: Write>(mut w: W, s: &Slice) -> Result<()> {
    writeln!(w, "x,y,value")?;
    for (j, y) in s.y.iter().enumerate() {
        for (i, x) in s.x.iter().enumerate() {
            writeln!(w, "{x},{y},{}", s.values[j * s.x.len() + i])?;
        }
    }
    Ok(())
}

/// Binary 8-bit PGM of a slice, min–max normalized, with the first `y`
/// value on the bottom row. Returns the `(min, max)` used.
pub fn write_pgm<W: Write>(mut w: W, s: &Slice) -> Result<(f64, f64)> {
    let (nx, ny) = (s.x.len(), s.y.len());
    let (lo, hi) = s.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    let mut row = vec![0u8; nx];
    for j in (0..ny).rev() {
        for (i, px) in row.iter_mut().enumerate() {
            *px = pixel(s.values[j * nx + i], lo, hi);
        }
        w.write_all(&row)?;
    }
    Ok((lo, hi))
}

/// Gray level of `v` on `[lo, hi]`; a flat image is mid-gray.
pub fn pixel(v: f64, lo: f64, hi: f64) -> u8 {
    if !(hi > lo) {
        return 128;
    }
    ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::tests_support::random_model;

    #[test]
    fn decay_csv_layout() {
        let mut buf = Vec::new();
        write_decay_csv(&mut buf, &[2.0, 1.0, 0.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,value,relative\n1,2,1\n2,1,0.5\n3,0,0\n");
    }

    #[test]
    fn histogram_counts_everything_in_range() {
        let h = Histogram::new(&[0.0, 0.1, 0.5, 1.0, 0.99], 0.0, 1.0, 4).unwrap();
        assert_eq!(h.counts, vec![2, 0, 1, 2]);
        assert_eq!(h.total(), 5);
        assert!(Histogram::new(&[], 1.0, 1.0, 3).is_err());
    }

    #[test]
    fn leverage_study_mass_and_spread() {
        let model = random_model(&[2, 2, 2], 3);
        let mut pts = Vec::new();
        for i in 0..256 {
            let t = (i as f64 + 0.5) / 256.0;
            pts.extend_from_slice(&[t, (t * 7.3).fract(), (t * 3.1).fract()]);
        }
        let pc = PointCloud::new(3, pts, vec![0.0; 256]).unwrap();
        let study = leverage_study(&model, &pc, 256, Transform::Dct, 1).unwrap();
        assert!((study.before.iter().sum::<f64>() - 8.0).abs() < 1e-8);
        assert!((study.after.iter().sum::<f64>() - 8.0).abs() < 1e-8);
        let (a, b) = study.histograms(10).unwrap();
        assert_eq!((a.total(), b.total()), (256, 256));
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &a, &b).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }

    #[test]
    fn pgm_and_csv_agree() {
        let s = Slice { x: vec![0.0, 1.0, 2.0], y: vec![0.0, 1.0], values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0] };
        let mut img = Vec::new();
        assert_eq!(write_pgm(&mut img, &s).unwrap(), (0.0, 5.0));
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[153, 204, 255, 0, 51, 102]);
        let mut csv = Vec::new();
        write_slice_csv(&mut csv, &s).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().nth(5).unwrap(), "1,1,4");
        let flat = Slice { values: vec![7.0; 6], ..s };
        let mut img = Vec::new();
        write_pgm(&mut img, &flat).unwrap();
        assert!(img[header.len()..].iter().all(|&p| p == 128));
    }
}
