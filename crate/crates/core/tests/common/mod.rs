#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkp_core::numerics::{DensityOperator, Matrix};
use tkp_core::C64;

/// `G G^dag / tr` for a Gaussian-ish random `G`; full rank almost surely.
pub fn density_from_entries(n: usize, entries: &[f64]) -> DensityOperator {
    let g = Matrix::from_row_major((0..n * n).map(|k| C64::new(entries[2 * k], entries[2 * k + 1])).collect()).unwrap();
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    let m = m.scale(C64::new(1.0 / tr, 0.0));
    // symmetrize away rounding
    let m = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
    DensityOperator::from_matrix(m).unwrap()
}

pub fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityOperator {
    let entries: Vec<f64> = (0..2 * n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    density_from_entries(n, &entries)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized random pure-state amplitudes.
pub fn random_amplitudes(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}
