//! Seeded pseudo-random generators for fuzz campaigns and tests.
//!
//! GUE-style Hermitian matrices: i.i.d. complex Gaussian entries symmetrized,
//! then rescaled so the spectrum sits inside a requested interval. Everything
//! is driven by a ChaCha stream so campaigns are reproducible from a seed.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{CMatrix, HermitianOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn random_complex_matrix(dim: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    Array2::from_shape_fn((dim, dim), |_| {
        Complex64::new(normal(rng), normal(rng)) / 2f64.sqrt()
    })
}

/// GUE-style Hermitian matrix, unnormalized spectrum.
pub fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> HermitianOperator {
    let g = random_complex_matrix(dim, rng);
    let mut h = CMatrix::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
        }
    }
    HermitianOperator::new(h).expect("symmetrized matrix is Hermitian")
}

/// Hermitian matrix rescaled so every eigenvalue lies in (-radius, radius).
pub fn random_hermitian_in(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> HermitianOperator {
    let h = random_hermitian(dim, rng);
    let dec = h.decompose().expect("decomposition of random Hermitian");
    let max_abs = dec
        .eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(1e-12);
    let scale = Complex64::new(0.9 * radius / max_abs, 0.0);
    HermitianOperator::new(h.entries() * scale).expect("scaling preserves hermiticity")
}

/// Random unit vector for rank-one perturbations.
pub fn random_unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(normal(rng), normal(rng)))
        .collect();
    let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// value * v v^* added to a Hermitian operator.
pub fn add_rank_one(
    base: &HermitianOperator,
    v: &[Complex64],
    weight: f64,
) -> HermitianOperator {
    let n = base.dim();
    assert_eq!(n, v.len());
    let mut m = base.entries().clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += Complex64::new(weight, 0.0) * v[i] * v[j].conj();
        }
    }
    HermitianOperator::new(m).expect("rank-one update preserves hermiticity")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_rng_reproduces() {
        let mut a = rng(123);
        let mut b = rng(123);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn random_hermitian_in_respects_radius() {
        let mut r = rng(77);
        for dim in 2..=6 {
            let h = random_hermitian_in(dim, 1.8, &mut r);
            let dec = h.decompose().unwrap();
            for lam in dec.eigenvalues() {
                assert!(lam.abs() < 1.8);
            }
        }
    }
}
