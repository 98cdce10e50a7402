mod common;

use common::{gaussian, rng};
use fstucker::basis::BasisSpec;
use fstucker::lasso::{lars_lasso_path, loo_error, loo_select, PathStatus};
use fstucker::tensor::Matrix;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::Rng;

/// Gaussian design with columns of roughly unit norm.
fn problem(q: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut g = rng(seed);
    let scale = (q as f64).sqrt().recip();
    let phi = Matrix::new(q, p, gaussian(&mut g, q * p).into_iter().map(|v| v * scale).collect()).unwrap();
    let z = gaussian(&mut g, q);
    (phi, z)
}

/// Correlations `Φᵀ(z − Φv)`.
fn correlations(phi: &Matrix, z: &[f64], v: &[f64]) -> Vec<f64> {
    let fit = phi.matvec(v).unwrap();
    let r: Vec<f64> = z.iter().zip(&fit).map(|(a, b)| a - b).collect();
    phi.tmatvec(&r).unwrap()
}

/// Largest violation of the optimality conditions of
/// `‖z − Φv‖² + λ‖v‖₁` at `v`.
fn kkt_violation(phi: &Matrix, z: &[f64], v: &[f64], lambda: f64) -> f64 {
    let half = lambda / 2.0;
    correlations(phi, z, v)
        .iter()
        .zip(v)
        .map(|(&c, &x)| if x != 0.0 { (c - half * x.signum()).abs() } else { (c.abs() - half).max(0.0) })
        .fold(0.0, f64::max)
}

/// Proximal gradient on the same objective, run to a fixed point.
fn ista(phi: &Matrix, z: &[f64], lambda: f64) -> Vec<f64> {
    let a = phi.to_nalgebra();
    let gram = a.tr_mul(&a);
    let atz = a.tr_mul(&nalgebra::DVector::from_column_slice(z));
    let l = 2.0 * gram.symmetric_eigenvalues().max();
    let mut v = nalgebra::DVector::zeros(phi.cols());
    for _ in 0..200_000 {
        let grad = 2.0 * (&gram * &v - &atz);
        let step = &v - grad / l;
        let next = step.map(|x| x.signum() * (x.abs() - lambda / l).max(0.0));
        let change = (&next - &v).amax();
        v = next;
        if change < 1e-15 {
            break;
        }
    }
    v.as_slice().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimality_holds_at_breakpoints_and_between(q in 6usize..40, p in 2usize..30, seed in any::<u64>()) {
        let (phi, z) = problem(q, p, seed);
        let path = lars_lasso_path(&phi, &z).unwrap();
        prop_assert!(path.steps[0].coeffs.is_empty());
        for w in path.steps.windows(2) {
            prop_assert!(w[1].lambda < w[0].lambda);
        }
        for step in &path.steps {
            prop_assert!(step.coeffs.iter().all(|(i, _)| step.active.binary_search(i).is_ok()));
            let v = path.coefficients_at(step.lambda);
            let viol = kkt_violation(&phi, &z, &v, step.lambda);
            prop_assert!(viol <= 1e-8, "λ={} violation {viol}", step.lambda);
        }
        if path.status != PathStatus::RankDeficient {
            for w in path.steps.windows(2) {
                let mid = 0.5 * (w[0].lambda + w[1].lambda);
                let v = path.coefficients_at(mid);
                prop_assert!(kkt_violation(&phi, &z, &v, mid) <= 1e-6);
            }
        }
    }
}

#[test]
fn path_matches_proximal_gradient() {
    for seed in 0..50 {
        let (phi, z) = problem(50, 30, 1000 + seed);
        let path = lars_lasso_path(&phi, &z).unwrap();
        assert_eq!(path.status, PathStatus::Complete);
        let lmax = path.steps[0].lambda;
        for i in 0..10 {
            let lambda = lmax * 0.6f64.powi(i + 1);
            let lars = path.coefficients_at(lambda);
            let reference = ista(&phi, &z, lambda);
            let diff = lars.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-6, "seed {seed} λ={lambda}: {diff}");
        }
    }
}

#[test]
fn loo_shortcut_matches_refits() {
    for seed in 0..20 {
        let (phi, z) = problem(12, 5, 2000 + seed);
        let active: Vec<usize> = (0..5).collect();
        let est = loo_error(&phi, &z, &active).unwrap();
        let a = phi.to_nalgebra();
        let mut literal = 0.0;
        for leave in 0..12 {
            let keep: Vec<usize> = (0..12).filter(|&i| i != leave).collect();
            let sub = a.select_rows(&keep);
            let zs = nalgebra::DVector::from_iterator(11, keep.iter().map(|&i| z[i]));
            let beta = sub.clone().svd(true, true).solve(&zs, 0.0).unwrap();
            let pred = (a.row(leave) * beta)[0];
            literal += (z[leave] - pred).powi(2);
        }
        literal /= 12.0;
        assert!((est.raw - literal).abs() <= 1e-9 * literal.max(1.0), "seed {seed}: {} vs {literal}", est.raw);
    }
}

#[test]
fn sparse_supports_are_recovered() {
    let (p, m) = (64usize, 4usize);
    let q = (8.0 * m as f64 * (p as f64).ln()).ceil() as usize;
    let basis = BasisSpec::legendre(p - 1, (0.0, 1.0)).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let (phi, _) = problem(q, p, 3000 + seed);
        let mut g = rng(4000 + seed);
        let mut support: Vec<usize> = sample(&mut g, p, m).into_vec();
        support.sort_unstable();
        let mut v = vec![0.0; p];
        for &j in &support {
            v[j] = g.random_range(1.0..2.0) * if g.random::<bool>() { 1.0 } else { -1.0 };
        }
        let clean = phi.matvec(&v).unwrap();
        let noise = gaussian(&mut g, q);
        // signal-to-noise power ratio 1e3
        let scale = common::norm(&clean) / common::norm(&noise) / 1e3f64.sqrt();
        let z: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + scale * b).collect();
        let path = lars_lasso_path(&phi, &z).unwrap();
        let fit = loo_select(&path, &phi, &z, basis).unwrap();
        let found: Vec<usize> = fit.coeffs.iter().map(|&(i, _)| i as usize).collect();
        if found == support {
            hits += 1;
        }
    }
    assert!(hits >= 95, "exact support recovered in {hits}/100 trials");
}
