mod common;

use common::{gaussian, norm, random_model, rel_diff, rng, uniform_points};
use fstucker::ingest::PointCloud;
use fstucker::sketch::{build_design_rows, mix, reestimate_core, sketch, solve_least_squares, SketchConfig, Transform};
use fstucker::tensor::Matrix;
use proptest::prelude::*;

fn transform() -> impl Strategy<Value = Transform> {
    prop_oneof![Just(Transform::Dct), Just(Transform::Wht), Just(Transform::Fft)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_is_an_isometry(t in transform(), q in 1usize..300, seed in any::<u64>()) {
        let mut g = rng(seed);
        let x = Matrix::new(q, 1, gaussian(&mut g, q)).unwrap();
        let fx = mix(&x, t, seed).unwrap();
        prop_assert!(fx.rows() >= q);
        let (a, b) = (norm(fx.col(0)), norm(x.col(0)));
        prop_assert!((a - b).abs() <= 1e-10 * b, "{t:?}: {a} vs {b}");
    }

    #[test]
    fn sketches_are_reproducible(t in transform(), q in 20usize..200, seed in any::<u64>()) {
        let mut g = rng(seed ^ 1);
        let w = Matrix::new(q, 3, gaussian(&mut g, 3 * q)).unwrap();
        let u = gaussian(&mut g, q);
        let cfg = SketchConfig { seed, transform: t, sample_rows: Some(q.min(10)), ..SketchConfig::default() };
        let a = sketch(&w, &u, &cfg).unwrap();
        let b = sketch(&w, &u, &cfg).unwrap();
        prop_assert_eq!(a.matrix.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.matrix.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.rhs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.rhs.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn sketched_residual_is_near_optimal() {
    let (q, r) = (2048, 16);
    let mut good = 0;
    for seed in 0..20 {
        let mut g = rng(seed);
        let w = Matrix::new(q, r, gaussian(&mut g, q * r)).unwrap();
        let u = gaussian(&mut g, q);
        let exact = solve_least_squares(&w, &u).unwrap().x;
        let cfg = SketchConfig { seed, sample_rows: Some(4 * r), ..SketchConfig::default() };
        let sk = sketch(&w, &u, &cfg).unwrap();
        let approx = solve_least_squares(&sk.matrix, &sk.rhs).unwrap().x;
        let res = |x: &[f64]| {
            let f = w.matvec(x).unwrap();
            norm(&u.iter().zip(&f).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        if res(&approx) <= 1.5 * res(&exact) {
            good += 1;
        }
    }
    assert!(good >= 18, "{good}/20");
}

#[test]
fn reestimation_recovers_a_consistent_core() {
    for t in [Transform::Dct, Transform::Wht, Transform::Fft] {
        let model = random_model(&[3, 2, 3], 7);
        let pts = uniform_points(3000, 3, 8);
        let w = build_design_rows(&model, &pts).unwrap();
        let values = w.matvec(model.core().data()).unwrap();
        // start from a perturbed core
        let mut g = rng(9);
        let noise = gaussian(&mut g, model.core().len());
        let mut start = model.core().clone();
        for (c, n) in start.data_mut().iter_mut().zip(noise) {
            *c += 0.1 * n;
        }
        let start = model.with_core(start).unwrap();
        let data = PointCloud::new(3, pts, values).unwrap();
        let cfg = SketchConfig { transform: t, ..SketchConfig::default() };
        let out = reestimate_core(&start, &data, &cfg).unwrap();
        let err = rel_diff(out.model.core().data(), model.core().data());
        assert!(err < 1e-10, "{t:?}: {err}");
        assert!(out.report.residual_after.unwrap() < 1e-10);
    }
}
