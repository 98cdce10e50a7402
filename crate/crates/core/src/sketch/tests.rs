use super::tests_support::{random_model, random_points};
use super::*;
use crate::basis::BasisSpec;
use crate::lasso::SparseFit;
use crate::model::{ModeFunctions, ModelMetadata};
use rand::Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cloud_from(model: &FunctionalTucker, q: usize, seed: u64) -> PointCloud {
    let pts = random_points(q, model.order(), seed);
    let vals = model.evaluate_batch(&pts).unwrap();
    PointCloud::new(model.order(), pts, vals).unwrap()
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut g = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b)
}

#[test]
fn constant_model_gives_column_of_ones() {
    let fit = SparseFit {
        basis: BasisSpec::legendre(0, (0.0, 1.0)).unwrap(),
        coeffs: vec![(0, 1.0)],
        chosen_lambda: 0.0,
        loo_error: 0.0,
        residual_rel: 0.0,
    };
    let modes = vec![ModeFunctions { domain: (0.0, 1.0), functions: vec![fit] }; 2];
    let model =
        FunctionalTucker::new(DenseTensor::new(vec![1, 1], vec![3.0]).unwrap(), modes, ModelMetadata::default())
            .unwrap();
    let w = build_design_rows(&model, &random_points(7, 2, 0)).unwrap();
    assert_eq!((w.rows(), w.cols()), (7, 1));
    assert!(w.data().iter().all(|&v| v == 1.0));
}

#[test]
fn design_row_is_kronecker_product() {
    let model = random_model(&[2, 3, 2], 1);
    let y = [0.25, 0.5, 0.75];
    let w = build_design_rows(&model, &y).unwrap();
    let v = model.mode_vectors(&y).unwrap();
    for j2 in 0..2 {
        for j1 in 0..3 {
            for j0 in 0..2 {
                let j = j0 + 2 * (j1 + 3 * j2);
                assert!((w.get(0, j) - v[0][j0] * v[1][j1] * v[2][j2]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn design_times_core_is_evaluation() {
    let model = random_model(&[3, 2, 4], 2);
    let pts = random_points(50, 3, 3);
    let w = build_design_rows(&model, &pts).unwrap();
    let direct = model.evaluate_batch(&pts).unwrap();
    for (a, b) in w.matvec(model.core().data()).unwrap().iter().zip(&direct) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn full_sampling_preserves_normal_equations() {
    let w = gaussian(40, 5, 4);
    let u: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
    for t in [Transform::Dct, Transform::Wht, Transform::Fft] {
        let q_pad = t.padded_len(40);
        let cfg = SketchConfig { transform: t, sample_rows: Some(q_pad), seed: 9, ..SketchConfig::default() };
        let sk = sketch(&w, &u, &cfg).unwrap();
        let (g0, g1) = (w.transpose().matmul(&w).unwrap(), sk.matrix.transpose().matmul(&sk.matrix).unwrap());
        for (a, b) in g0.data().iter().zip(g1.data()) {
            assert!((a - b).abs() < 1e-10, "{t:?}");
        }
        let (h0, h1) = (w.tmatvec(&u).unwrap(), sk.matrix.tmatvec(&sk.rhs).unwrap());
        for (a, b) in h0.iter().zip(&h1) {
            assert!((a - b).abs() < 1e-10, "{t:?}");
        }
    }
}

#[test]
fn scalar_problem_is_preserved_up_to_sign() {
    let w = Matrix::new(1, 1, vec![2.0]).unwrap();
    for t in [Transform::Dct, Transform::Wht] {
        let cfg = SketchConfig { transform: t, sample_rows: Some(1), seed: 5, ..SketchConfig::default() };
        let sk = sketch(&w, &[3.0], &cfg).unwrap();
        assert_eq!(sk.matrix.get(0, 0).abs(), 2.0);
        assert_eq!(sk.rhs[0] / sk.matrix.get(0, 0), 1.5);
    }
}

#[test]
fn sketch_is_deterministic() {
    let w = gaussian(300, 6, 5);
    let u: Vec<f64> = (0..300).map(|i| i as f64).collect();
    let cfg = SketchConfig { sample_rows: Some(30), seed: 77, ..SketchConfig::default() };
    let a = sketch(&w, &u, &cfg).unwrap();
    let b = sketch(&w, &u, &cfg).unwrap();
    assert_eq!(a, b);
    let c = sketch(&w, &u, &SketchConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sketch_rejects_too_many_rows() {
    let w = gaussian(10, 2, 0);
    let cfg = SketchConfig { sample_rows: Some(11), ..SketchConfig::default() };
    assert!(matches!(sketch(&w, &[0.0; 10], &cfg), Err(Error::Parameter(_))));
}

#[test]
fn leverage_examples() {
    let q = Matrix::from_nalgebra(&gaussian(6, 6, 1).to_nalgebra().qr().q());
    assert!(leverage_scores(&q).unwrap().iter().all(|&s| (s - 1.0).abs() < 1e-10));

    let mut spike = gaussian(50, 3, 2);
    for j in 0..3 {
        for i in 0..50 {
            spike.set(i, j, spike.get(i, j) * 1e-6);
        }
    }
    spike.set(7, 0, 1e3);
    let s = leverage_scores(&spike).unwrap();
    assert!((s[7] - 1.0).abs() < 1e-8);

    let s = leverage_scores(&gaussian(200, 10, 3)).unwrap();
    assert!(s.iter().all(|&v| v >= 0.0));
    assert!((s.iter().sum::<f64>() - 10.0).abs() < 1e-8);
}

#[test]
fn leverage_sum_is_rank() {
    let mut w = gaussian(30, 4, 4);
    for i in 0..30 {
        w.set(i, 3, w.get(i, 0) + w.get(i, 1));
    }
    let s = leverage_scores(&w).unwrap();
    assert!((s.iter().sum::<f64>() - 3.0).abs() < 1e-8);
}

#[test]
fn rank_deficient_system_falls_back_to_min_norm() {
    let a = Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]).unwrap();
    let sol = solve_least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
    assert!(sol.rank_deficient);
    assert!((sol.x[0] - 0.5).abs() < 1e-12 && (sol.x[1] - 0.5).abs() < 1e-12);
    let b = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap();
    let sol = solve_least_squares(&b, &[1.0, 2.0, 3.0]).unwrap();
    assert!(!sol.rank_deficient);
    assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12);
}

#[test]
fn consistent_data_recovers_core() {
    let model = random_model(&[3, 2, 3], 6);
    let data = cloud_from(&model, 2000, 7);
    for t in [Transform::Dct, Transform::Wht, Transform::Fft] {
        let cfg = SketchConfig { transform: t, seed: 3, ..SketchConfig::default() };
        let out = reestimate_core(&model, &data, &cfg).unwrap();
        assert!(rel_diff(out.model.core().data(), model.core().data()) < 1e-8, "{t:?}");
        assert_eq!(out.report.sample_rows, 45);
        assert_eq!(out.report.validation_rows, 200);
        assert!(out.report.residual_after.unwrap() < 1e-8);
    }
}

#[test]
fn planted_core_is_recovered() {
    let model = random_model(&[2, 3, 2], 8);
    let mut g = rng(9);
    let planted: Vec<f64> = model.core().data().iter().map(|v| v + 0.3 * g.sample::<f64, _>(StandardNormal)).collect();
    let truth = model.with_core(DenseTensor::new(model.ranks().to_vec(), planted.clone()).unwrap()).unwrap();
    let data = cloud_from(&truth, 3000, 10);
    let cfg = SketchConfig { sample_rows: Some(4 * 12), seed: 1, ..SketchConfig::default() };
    let out = reestimate_core(&model, &data, &cfg).unwrap();
    assert!(rel_diff(out.model.core().data(), &planted) < 1e-6);
    let (before, after) = (out.report.residual_before.unwrap(), out.report.residual_after.unwrap());
    assert!(after < 1e-8 && before > 1e-2);
}

#[test]
fn parameter_errors() {
    let model = random_model(&[2, 2, 2], 0);
    let data = cloud_from(&model, 100, 0);
    let small = SketchConfig { sample_rows: Some(8), ..SketchConfig::default() };
    assert!(matches!(reestimate_core(&model, &data, &small), Err(Error::Parameter(_))));
    let big = SketchConfig { sample_rows: Some(95), ..SketchConfig::default() };
    assert!(matches!(reestimate_core(&model, &data, &big), Err(Error::Parameter(_))));
    let wrong_dim = PointCloud::new(2, vec![0.5; 20], vec![1.0; 10]).unwrap();
    assert!(reestimate_core(&model, &wrong_dim, &SketchConfig::default()).is_err());
}

#[test]
fn working_subset_caps_rows() {
    let model = random_model(&[2, 2, 2], 1);
    let data = cloud_from(&model, 1000, 2);
    let cfg = SketchConfig { working_subset: Some(300), validation_fraction: 0.0, ..SketchConfig::default() };
    let out = reestimate_core(&model, &data, &cfg).unwrap();
    assert_eq!(out.report.working_rows, 300);
    assert_eq!(out.report.validation_rows, 0);
    assert!(out.report.residual_after.is_none());
    assert!(rel_diff(out.model.core().data(), model.core().data()) < 1e-8);
}

#[test]
fn self_convergence_examples() {
    let model = random_model(&[2, 2, 2], 3);
    let data = cloud_from(&model, 800, 4);
    let cfg = SketchConfig { seed: 5, ..SketchConfig::default() };
    let same = self_convergence(&model, &data, &[20, 20, 20], &cfg).unwrap();
    assert_eq!(same.len(), 2);
    assert!(same.iter().all(|p| p.delta == 0.0));
    let exact = self_convergence(&model, &data, &[9, 12, 20, 40], &cfg).unwrap();
    assert!(exact.iter().all(|p| p.delta <= 1e-8), "{exact:?}");
    assert!(self_convergence(&model, &data, &[20, 10], &cfg).is_err());
    assert!(self_convergence(&model, &data, &[8, 10], &cfg).is_err());
}

#[test]
fn config_serde_accepts_all() {
    let cfg: SketchConfig = serde_json::from_str(r#"{"working_subset": "all", "transform": "wht"}"#).unwrap();
    assert_eq!(cfg.working_subset, None);
    assert_eq!(cfg.transform, Transform::Wht);
    assert_eq!(serde_json::to_value(cfg).unwrap()["working_subset"], "all");
    let cfg: SketchConfig = serde_json::from_str(r#"{"working_subset": 12}"#).unwrap();
    assert_eq!(cfg.working_subset, Some(12));
    assert!(serde_json::from_str::<SketchConfig>(r#"{"working_subset": "most"}"#).is_err());
    assert!(serde_json::from_str::<SketchConfig>(r#"{"rows": 1}"#).is_err());
}
