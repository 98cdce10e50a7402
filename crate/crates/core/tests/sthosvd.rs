mod common;

use common::{brute_unfold, orthonormal, random_tensor, rng};
use fstucker::sthosvd::{reconstruct, sthosvd};
use fstucker::tensor::{relative_error, DenseTensor};
use proptest::prelude::*;

/// Left singular vectors of the mode-k unfolding, computed directly by SVD.
fn hosvd_factor(t: &DenseTensor, k: usize) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let svd = brute_unfold(t, k).svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = svd.u.unwrap();
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    (sv, u.select_columns(&order))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn error_bound_holds(
        shape in prop::collection::vec(2usize..=40, 3),
        eps_i in 0usize..3,
        seed in any::<u64>(),
    ) {
        let eps = [1e-1, 1e-2, 1e-4][eps_i];
        // Smooth low-rank part plus noise so truncation is nontrivial.
        let noise = random_tensor(&shape, seed);
        let u = DenseTensor::from_fn(shape.clone(), |i| {
            let x: f64 = i.iter().enumerate().map(|(k, &v)| (k + 1) as f64 * v as f64 / 40.0).sum();
            (1.0 + x).recip() + 1e-3 * noise.get(i)
        }).unwrap();
        let dec = sthosvd(&u, eps).unwrap();
        let err = relative_error(&u, &reconstruct(&dec).unwrap()).unwrap();
        prop_assert!(err <= eps, "error {err} above {eps}");
        prop_assert!(dec.achieved_error <= eps);
        for (r, n) in dec.ranks().iter().zip(&shape) {
            prop_assert!(r <= n);
        }
        for w in &dec.factors {
            prop_assert!(w.orthonormality_defect() <= 1e-10);
        }
    }

    #[test]
    fn tighter_tolerance_never_lowers_ranks(shape in prop::collection::vec(2usize..=12, 3), seed in any::<u64>()) {
        let u = random_tensor(&shape, seed);
        let mut prev: Option<Vec<usize>> = None;
        for eps in [0.5, 1e-1, 1e-2, 1e-4] {
            let ranks = sthosvd(&u, eps).unwrap().ranks();
            if let Some(p) = &prev {
                prop_assert!(ranks.iter().zip(p).all(|(a, b)| a >= b), "{p:?} -> {ranks:?}");
            }
            prev = Some(ranks);
        }
    }

    #[test]
    fn core_energy_is_bounded(shape in prop::collection::vec(2usize..=10, 3), seed in any::<u64>()) {
        let u = random_tensor(&shape, seed);
        let n = u.fro_norm();
        prop_assert!(sthosvd(&u, 0.3).unwrap().core.fro_norm() <= n * (1.0 + 1e-12));
        let full = sthosvd(&u, 1e-14).unwrap().core.fro_norm();
        prop_assert!((full - n).abs() <= 1e-10 * n);
    }
}

#[test]
fn known_multilinear_rank_is_recovered() {
    let mut g = rng(42);
    let (shape, ranks) = ([12, 10, 14], [3, 2, 4]);
    let alpha = random_tensor(&ranks, 43);
    let mut u = alpha;
    for k in 0..3 {
        let q = orthonormal(shape[k], ranks[k], &mut g);
        u = u.mode_product(&q, k).unwrap();
    }
    let noise = random_tensor(&shape, 44);
    let scale = 1e-8 * u.fro_norm() / noise.fro_norm();
    let data: Vec<f64> = u.data().iter().zip(noise.data()).map(|(a, b)| a + scale * b).collect();
    let u = DenseTensor::new(shape.to_vec(), data).unwrap();

    let dec = sthosvd(&u, 1e-4).unwrap();
    assert_eq!(dec.ranks(), ranks);
    let err = relative_error(&u, &reconstruct(&dec).unwrap()).unwrap();
    assert!(err <= 1e-4, "{err}");
    // independent check of the error: truncation leaves only the noise
    assert!(err <= 2e-8, "{err}");
}

#[test]
fn full_rank_factors_match_unfolding_svds() {
    for seed in 0..20 {
        let u = random_tensor(&[5, 6, 7], 100 + seed);
        let dec = sthosvd(&u, 1e-14).unwrap();
        assert_eq!(dec.ranks(), vec![5, 6, 7]);
        for k in 0..3 {
            let (sv, oracle) = hosvd_factor(&u, k);
            let w = &dec.factors[k];
            for j in 0..w.cols() {
                let col = nalgebra::DVector::from_column_slice(w.col(j));
                let o = oracle.column(j);
                let sign = if col.dot(&o) < 0.0 { -1.0 } else { 1.0 };
                let diff = (&col - sign * o).amax();
                assert!(diff <= 1e-8, "seed {seed} mode {k} column {j}: {diff} (σ = {:?})", sv);
            }
        }
    }
}
