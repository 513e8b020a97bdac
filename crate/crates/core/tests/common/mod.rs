#![allow(dead_code)]

use mpo_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn frob(a: &Tensor) -> f64 {
    a.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d / frob(b).max(1e-300)
}

/// `x * w + b` with plain loops.
pub fn affine(x: &Tensor, w: &Tensor, b: &[f64]) -> Tensor {
    let (batch, rows, cols) = (x.rows(), w.rows(), w.cols());
    Tensor::from_fn(vec![batch, cols], |e| {
        let (r, j) = (e / cols, e % cols);
        b[j] + (0..rows).map(|i| x.at(&[r, i]) * w.at(&[i, j])).sum::<f64>()
    })
    .unwrap()
}
