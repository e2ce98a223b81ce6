#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttreg::tensor::{DenseTensor, KroneckerScale};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn random_spd(r: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = random_matrix(r, p, p);
    &a * a.transpose() + DMatrix::identity(p, p) * 0.5
}

pub fn random_tensor(r: &mut ChaCha8Rng, dims: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(dims, |_| r.random_range(-1.0..1.0)).unwrap()
}

pub fn random_scale(r: &mut ChaCha8Rng, dims: &[usize]) -> KroneckerScale {
    KroneckerScale::new(dims.iter().map(|&d| random_spd(r, d)).collect()).unwrap()
}

/// `A ⊗ B` from the elementwise definition.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// `Σ_M ⊗ … ⊗ Σ_1`.
pub fn kron_all(modes: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for m in modes {
        out = kron(m, &out);
    }
    out
}
