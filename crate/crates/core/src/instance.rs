//! Seeded test instances `(H, V)`.
//!
//! Every generator draws from one ChaCha8 stream seeded by the instance seed,
//! so identical seeds give bit-identical matrices on every platform.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{OslabError, Result};
use crate::spectral::SymmetricOperator;

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng))
}

fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(OslabError::InvalidParameter("instance dimension must be at least 1".into()));
    }
    Ok(())
}

/// `H` and `V` independent symmetrized Gaussian arrays scaled by
/// `1/√dim`, so both spectra stay O(1) as `dim` grows.
pub fn random_goe(dim: usize, seed: u64) -> Result<(SymmetricOperator, SymmetricOperator)> {
    check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let h = symmetrized(&gaussian(&mut rng, dim)) * scale;
    let v = symmetrized(&gaussian(&mut rng, dim)) * scale;
    Ok((SymmetricOperator::new(h)?, SymmetricOperator::new(v)?))
}

/// `H` a symmetrized Gaussian array and `V = AAᵀ/‖AAᵀ‖` with Gaussian `A`:
/// PSD with unit spectral norm.
pub fn random_psd_pair(dim: usize, seed: u64) -> Result<(SymmetricOperator, SymmetricOperator)> {
    check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = symmetrized(&gaussian(&mut rng, dim));
    let a = gaussian(&mut rng, dim);
    let aat = symmetrized(&(&a * a.transpose()));
    let norm = SymmetricOperator::new(aat.clone())?.operator_norm();
    Ok((SymmetricOperator::new(h)?, SymmetricOperator::new(aat / norm)?))
}

/// `V` of [`random_psd_pair`] negated.
pub fn random_nsd_pair(dim: usize, seed: u64) -> Result<(SymmetricOperator, SymmetricOperator)> {
    let (h, v) = random_psd_pair(dim, seed)?;
    Ok((h, v.scaled(-1.0)))
}

/// Seed of the `index`-th instance of a suite, independent of evaluation
/// order.
pub fn derived_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}
