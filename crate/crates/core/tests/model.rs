mod common;

use std::time::Instant;

use common::{random_model, rng, uniform_points};
use fstucker::basis::BasisSpec;
use fstucker::fstk;
use fstucker::lasso::SparseFit;
use fstucker::model::{FunctionalTucker, ModeFunctions, ModelMetadata};
use fstucker::tensor::DenseTensor;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn serialized_models_evaluate_identically(
        ranks in prop::collection::vec(1usize..5, 1..5),
        seed in any::<u64>(),
    ) {
        let model = random_model(&ranks, seed);
        let bytes = fstk::to_bytes(&model).unwrap();
        let back = fstk::read_model(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &model);
        let pts = uniform_points(1000, ranks.len(), seed ^ 3);
        let a = model.evaluate_batch(&pts).unwrap();
        let b = back.evaluate_batch(&pts).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fstk");
    let model = random_model(&[4, 3, 2], 5);
    fstk::serialize(&model, &path).unwrap();
    let back = fstk::deserialize(&path).unwrap();
    assert_eq!(fstk::to_bytes(&back).unwrap(), std::fs::read(&path).unwrap());
}

/// Dense-coefficient model with `n[k]` Legendre terms per function.
fn model_with(ranks: &[usize], n: &[usize], seed: u64) -> FunctionalTucker {
    let mut g = rng(seed);
    let modes = ranks
        .iter()
        .zip(n)
        .map(|(&r, &nk)| ModeFunctions {
            domain: (0.0, 1.0),
            functions: (0..r)
                .map(|_| SparseFit {
                    basis: BasisSpec::legendre(nk - 1, (0.0, 1.0)).unwrap(),
                    coeffs: (0..nk as u32).map(|i| (i, g.random_range(-1.0..1.0))).collect(),
                    chosen_lambda: 0.0,
                    loo_error: 0.0,
                    residual_rel: 0.0,
                })
                .collect(),
        })
        .collect();
    let len: usize = ranks.iter().product();
    let core = DenseTensor::new(ranks.to_vec(), (0..len).map(|_| g.random_range(-1.0..1.0)).collect()).unwrap();
    FunctionalTucker::new(core, modes, ModelMetadata::default()).unwrap()
}

#[test]
fn evaluation_cost_tracks_core_size() {
    // Σ n_k r_k = 480 in both models; the core doubles.
    let small = model_with(&[8, 8, 8], &[20, 20, 20], 1);
    let large = model_with(&[16, 8, 8], &[10, 20, 20], 2);
    let pts = uniform_points(4000, 3, 3);
    let time = |m: &FunctionalTucker| {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            for y in pts.chunks_exact(3) {
                std::hint::black_box(m.evaluate(y).unwrap());
            }
            best = best.min(t.elapsed().as_secs_f64());
        }
        best
    };
    let (ts, tl) = (time(&small), time(&large));
    assert!(tl <= 3.0 * 2.0 * ts, "{tl:.4}s vs {ts:.4}s");
}
