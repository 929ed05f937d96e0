//! Lawson–Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{OslabError, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `‖A x − b‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

/// `argmin_{x >= 0} ‖A x − b‖₂`.
///
/// Columns are scaled to unit norm internally. The outer loop is capped at
/// `3 · columns` iterations; hitting the cap is an error carrying the
/// residual after every outer iteration.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if m != b.len() || n == 0 {
        return Err(OslabError::InvalidParameter(format!(
            "nnls needs a non-empty {m}-row system, got {m}x{n} with {} data points",
            b.len()
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut scaled = a.clone();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            scaled.column_mut(j).unscale_mut(nj);
        }
    }
    let usable: Vec<bool> = norms.iter().map(|&nj| nj > 0.0).collect();
    let tol = 10.0 * f64::EPSILON * m.max(n) as f64 * b.norm().max(f64::MIN_POSITIVE);
    let cap = 3 * n;

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let residual = b - &scaled * &x;
        trace.push(residual.norm());
        let w = scaled.tr_mul(&residual);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && usable[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        if iterations == cap {
            return Err(OslabError::NnlsNotConverged {
                iterations,
                residuals: trace,
            });
        }
        iterations += 1;
        passive[j] = true;
        loop {
            let set: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = solve_subset(&scaled, b, &set);
            if set.iter().zip(z.iter()).all(|(_, &zi)| zi > 0.0) {
                for (&i, &zi) in set.iter().zip(z.iter()) {
                    x[i] = zi;
                }
                break;
            }
            // step back to the boundary of the feasible region
            let alpha = set
                .iter()
                .zip(z.iter())
                .filter(|(_, &zi)| zi <= 0.0)
                .map(|(&i, &zi)| x[i] / (x[i] - zi))
                .fold(f64::INFINITY, f64::min);
            for (&i, &zi) in set.iter().zip(z.iter()) {
                x[i] += alpha * (zi - x[i]);
                if x[i] <= tol * 1e-3 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if passive.iter().all(|&p| !p) {
                break;
            }
        }
    }
    for (j, &nj) in norms.iter().enumerate() {
        x[j] = if nj > 0.0 { x[j] / nj } else { 0.0 };
    }
    let residual = (a * &x - b).norm();
    Ok(NnlsSolution {
        x,
        residual,
        iterations,
    })
}

/// Unconstrained least squares on the columns in `set`.
fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, set: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(set);
    let svd = sub.svd(true, true);
    let cutoff = f64::EPSILON * svd.singular_values.max() * set.len().max(a.nrows()) as f64;
    svd.solve(b, cutoff).expect("both singular bases were requested")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recovers_a_nonnegative_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let s = nnls(&a, &b).unwrap();
        assert_close!(s.x[0], 2.0, 1e-12);
        assert_close!(s.x[1], 3.0, 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn clamps_negative_directions_to_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let s = nnls(&a, &b).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert_close!(s.x[1], 2.0, 1e-14);
        assert_close!(s.residual, 1.0, 1e-14);
    }

    #[test]
    fn zero_columns_stay_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let s = nnls(&a, &b).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert_close!(s.x[1], 1.0, 1e-14);
    }

    proptest! {
        /// KKT conditions: x >= 0, gradient >= 0 on the zero set, = 0 on the support.
        #[test]
        fn solution_satisfies_kkt(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (m, n) = (8, 5);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let s = nnls(&a, &b).unwrap();
            let grad = a.tr_mul(&(&a * &s.x - &b));
            for j in 0..n {
                prop_assert!(s.x[j] >= 0.0);
                if s.x[j] > 0.0 {
                    prop_assert!(grad[j].abs() < 1e-9);
                } else {
                    prop_assert!(grad[j] > -1e-9);
                }
            }
        }
    }
}
