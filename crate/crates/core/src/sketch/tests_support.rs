//! Test fixtures shared across modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::BasisSpec;
use crate::lasso::SparseFit;
use crate::model::{FunctionalTucker, ModeFunctions, ModelMetadata};
use crate::tensor::DenseTensor;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Model on the unit box with Legendre mode functions of random sparse
/// coefficients and a random core.
pub(crate) fn random_model(ranks: &[usize], seed: u64) -> FunctionalTucker {
    let mut g = rng(seed);
    let modes = ranks
        .iter()
        .map(|&r| ModeFunctions {
            domain: (0.0, 1.0),
            functions: (0..r)
                .map(|j| SparseFit {
                    basis: BasisSpec::legendre(6, (0.0, 1.0)).unwrap(),
                    coeffs: vec![(j as u32, 1.0), (j as u32 + 2, g.random_range(-0.5..0.5))],
                    chosen_lambda: 0.0,
                    loo_error: 0.0,
                    residual_rel: 0.0,
                })
                .collect(),
        })
        .collect();
    let len = ranks.iter().product();
    let core = DenseTensor::new(ranks.to_vec(), (0..len).map(|_| g.sample(StandardNormal)).collect()).unwrap();
    FunctionalTucker::new(core, modes, ModelMetadata::default()).unwrap()
}

pub(crate) fn random_points(q: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut g = rng(seed);
    (0..q * d).map(|_| g.random()).collect()
}
