//! Dense real symmetric matrices with a cached spectral decomposition.
//!
//! Every [`SymmetricOperator`] is diagonalised once, at construction, by a
//! cyclic Jacobi sweep. Downstream code (functional calculus, multilinear
//! operator integrals, spectral shift estimates) only ever reads the cached
//! eigenpairs, so values are immutable and can be shared across threads.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OslabError, Result};
use crate::functions::SmoothFunction;

/// Relative symmetry tolerance accepted by [`SymmetricOperator::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative width under which eigenvalues are treated as coincident.
pub const CLUSTER_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(OslabError::InvalidParameter(format!(
                "interval requires lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn widen(&self, margin: f64) -> Interval {
        Interval {
            lo: self.lo - margin,
            hi: self.hi + margin,
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `count` equispaced points including both endpoints.
    pub fn linspace(&self, count: usize) -> Vec<f64> {
        linspace(self.lo, self.hi, count)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        hi
                    } else {
                        lo + (hi - lo) * (i as f64) / last
                    }
                })
                .collect()
        }
    }
}

/// Ascending eigenvalues with the matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// A real symmetric matrix together with its spectral decomposition.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    matrix: DMatrix<f64>,
    spectrum: SpectralDecomposition,
}

impl SymmetricOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let spectrum = eigendecompose(&matrix)?;
        let matrix = symmetrize(&matrix);
        Ok(Self { matrix, spectrum })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(OslabError::BadShape { rows: 0, cols: 0 });
        }
        for row in rows {
            if row.len() != n {
                return Err(OslabError::BadShape {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
            .expect("diagonal matrices are symmetric")
    }

    pub fn zeros(dim: usize) -> Self {
        Self::diagonal(&vec![0.0; dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    /// Builds the operator `Q diag(values) Qᵀ` and re-diagonalises it.
    pub fn from_spectrum(eigenvectors: &DMatrix<f64>, values: &[f64]) -> Result<Self> {
        Self::new(reconstruct(eigenvectors, values))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.spectrum.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectrum.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.spectrum.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Spectral norm `max |λ_i|`.
    pub fn operator_norm(&self) -> f64 {
        self.min_eigenvalue().abs().max(self.max_eigenvalue().abs())
    }

    pub fn spectral_interval(&self) -> Interval {
        Interval {
            lo: self.min_eigenvalue(),
            hi: self.max_eigenvalue(),
        }
    }

    /// Width under which two eigenvalues of this operator count as equal.
    pub fn cluster_tolerance(&self) -> f64 {
        CLUSTER_TOL * self.operator_norm().max(1.0)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn is_nsd(&self, tol: f64) -> bool {
        self.max_eigenvalue() <= tol
    }

    /// `self + t·other`.
    pub fn add_scaled(&self, other: &SymmetricOperator, t: f64) -> Result<SymmetricOperator> {
        self.check_dim(other)?;
        Self::new(&self.matrix + &other.matrix * t)
    }

    pub fn sub(&self, other: &SymmetricOperator) -> Result<SymmetricOperator> {
        self.add_scaled(other, -1.0)
    }

    pub fn scaled(&self, c: f64) -> SymmetricOperator {
        let mut spectrum = self.spectrum.clone();
        if c >= 0.0 {
            spectrum.eigenvalues.iter_mut().for_each(|x| *x *= c);
            Self {
                matrix: &self.matrix * c,
                spectrum,
            }
        } else {
            Self::new(&self.matrix * c).expect("scaled symmetric matrix stays symmetric")
        }
    }

    pub fn check_dim(&self, other: &SymmetricOperator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(OslabError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// `Q g(Λ) Qᵀ` for an arbitrary scalar map.
    pub fn map_spectrum(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let values: Vec<f64> = self.spectrum.eigenvalues.iter().map(|&x| g(x)).collect();
        reconstruct(&self.spectrum.eigenvectors, &values)
    }

    /// `f(H)` as a plain matrix, rejecting spectra outside the domain of `f`.
    pub fn function_matrix(&self, f: &dyn SmoothFunction) -> Result<DMatrix<f64>> {
        self.check_in_domain(f)?;
        Ok(self.map_spectrum(|x| f.eval(x, 0)))
    }

    pub fn apply_function(&self, f: &dyn SmoothFunction) -> Result<SymmetricOperator> {
        Self::new(self.function_matrix(f)?)
    }

    /// `Tr f(H)` straight from the eigenvalues.
    pub fn trace_of(&self, f: &dyn SmoothFunction) -> Result<f64> {
        self.check_in_domain(f)?;
        Ok(self.spectrum.eigenvalues.iter().map(|&x| f.eval(x, 0)).sum())
    }

    pub fn check_in_domain(&self, f: &dyn SmoothFunction) -> Result<()> {
        let domain = f.domain();
        for &x in &self.spectrum.eigenvalues {
            if !domain.contains(x) {
                return Err(OslabError::OutsideDomain {
                    function: f.name().to_string(),
                    eigenvalue: x,
                    domain: domain.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix)
    }

    /// Schatten `p`-norm from the eigenvalues; `p = f64::INFINITY` gives the
    /// spectral norm.
    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        schatten_from_values(self.spectrum.eigenvalues.iter().map(|x| x.abs()), p)
    }
}

pub fn trace(a: &DMatrix<f64>) -> f64 {
    a.diagonal().iter().sum()
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub(crate) fn reconstruct(q: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let n = q.nrows();
    let mut scaled = q.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let out = scaled * q.transpose();
    debug_assert_eq!(out.nrows(), n);
    symmetrize(&out)
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Cyclic Jacobi eigensolver with threshold sweeps.
///
/// Eigenvalues come back ascending. Each eigenvector is normalised so that its
/// first component of magnitude above `1e-12` is positive, which makes the
/// output deterministic for a fixed input.
pub fn eigendecompose(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let (rows, cols) = a.shape();
    if rows != cols || rows == 0 {
        return Err(OslabError::BadShape { rows, cols });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(OslabError::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    let asymmetry = max_asymmetry(a);
    if asymmetry > SYMMETRY_TOL * max_abs(a).max(1.0) {
        return Err(OslabError::NotSymmetric { asymmetry });
    }

    let n = rows;
    let mut m = symmetrize(a);
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 1..=MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].abs())
            .sum();
        if off == 0.0 {
            break;
        }
        let thresh = if sweep < 4 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[(p, q)] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[(p, q)] = 0.0;
                let rotate = |m: &mut DMatrix<f64>, i: usize, j: usize, k: usize, l: usize| {
                    let g = m[(i, j)];
                    let h = m[(k, l)];
                    m[(i, j)] = g - s * (h + g * tau);
                    m[(k, l)] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rotate(&mut m, j, p, j, q);
                }
                for j in (p + 1)..q {
                    rotate(&mut m, p, j, j, q);
                }
                for j in (q + 1)..n {
                    rotate(&mut m, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src).into_owned();
        let norm = vec.norm();
        vec /= norm;
        if let Some(first) = vec.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                vec.neg_mut();
            }
        }
        eigenvectors.set_column(col, &vec);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn schatten_from_values(values: impl Iterator<Item = f64>, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(OslabError::InvalidParameter(format!(
            "Schatten exponent must be >= 1, got {p}"
        )));
    }
    let values: Vec<f64> = values.collect();
    let largest = values.iter().fold(0.0f64, |m, &x| m.max(x));
    if p.is_infinite() || largest == 0.0 {
        return Ok(largest);
    }
    // scale by the largest value so large p does not overflow
    let sum: f64 = values.iter().map(|&x| (x / largest).powf(p)).sum();
    Ok(largest * sum.powf(1.0 / p))
}

/// Schatten `p`-norm of an arbitrary square matrix via its singular values.
pub fn schatten_norm_general(a: &DMatrix<f64>, p: f64) -> Result<f64> {
    let sv = a.clone().svd(false, false).singular_values;
    schatten_from_values(sv.iter().copied(), p)
}

/// Spectral hull of `t ↦ H + tV` over `[t_lo, t_hi]`.
#[derive(Debug, Clone, Copy)]
pub struct HullReport {
    /// Sampled extreme eigenvalues, widened by `1e-6·width`.
    pub sampled: Interval,
    /// Weyl-inequality enclosure; always contains `sampled` before widening.
    pub weyl: Interval,
}

pub fn spectral_hull(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    t_lo: f64,
    t_hi: f64,
    samples: usize,
) -> Result<HullReport> {
    h.check_dim(v)?;
    if t_lo > t_hi || samples < 2 {
        return Err(OslabError::InvalidParameter(format!(
            "spectral hull needs t_lo <= t_hi and samples >= 2, got [{t_lo}, {t_hi}] with {samples}"
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in linspace(t_lo, t_hi, samples) {
        let ht = h.add_scaled(v, t)?;
        lo = lo.min(ht.min_eigenvalue());
        hi = hi.max(ht.max_eigenvalue());
    }
    let margin = 1e-6 * (hi - lo);
    let sampled = Interval {
        lo: lo - margin,
        hi: hi + margin,
    };

    // λ_min(H + tV) >= λ_min(H) + λ_min(tV); the bound is concave in t, so its
    // minimum over the interval sits at an endpoint (and dually for λ_max).
    let weyl_lo = |t: f64| {
        h.min_eigenvalue()
            + if t >= 0.0 {
                t * v.min_eigenvalue()
            } else {
                t * v.max_eigenvalue()
            }
    };
    let weyl_hi = |t: f64| {
        h.max_eigenvalue()
            + if t >= 0.0 {
                t * v.max_eigenvalue()
            } else {
                t * v.min_eigenvalue()
            }
    };
    let weyl = Interval {
        lo: weyl_lo(t_lo).min(weyl_lo(t_hi)),
        hi: weyl_hi(t_lo).max(weyl_hi(t_hi)),
    };
    Ok(HullReport { sampled, weyl })
}

/// Closed hull of the spectra of every operator in `ops`.
pub fn joint_spectral_interval<'a>(ops: impl IntoIterator<Item = &'a SymmetricOperator>) -> Interval {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for op in ops {
        lo = lo.min(op.min_eigenvalue());
        hi = hi.max(op.max_eigenvalue());
    }
    Interval { lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{builtin, FunctionSpec};
    use crate::testing::random_symmetric;

    fn exp_fn() -> Box<dyn SmoothFunction> {
        builtin(&FunctionSpec::new("exp")).unwrap()
    }

    #[test]
    fn diagonal_input_sorted_ascending() {
        let a = SymmetricOperator::diagonal(&[2.0, 1.0]);
        assert_eq!(a.eigenvalues(), &[1.0, 2.0]);
        let q = a.eigenvectors();
        assert_eq!(q.column(0).as_slice(), &[0.0, 1.0]);
        assert_eq!(q.column(1).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn swap_matrix_eigenvectors_follow_sign_convention() {
        let a = SymmetricOperator::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_close!(a.eigenvalues()[0], -1.0, 1e-15);
        assert_close!(a.eigenvalues()[1], 1.0, 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let q = a.eigenvectors();
        assert_close!(q[(0, 0)], r, 1e-15);
        assert_close!(q[(1, 0)], -r, 1e-15);
        assert_close!(q[(0, 1)], r, 1e-15);
        assert_close!(q[(1, 1)], r, 1e-15);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let a = random_symmetric(6, 11);
        let op = SymmetricOperator::new(a.clone()).unwrap();
        let q = op.eigenvectors();
        let qtq = q.transpose() * q;
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!(max_abs(&(qtq - eye)) <= 1e-10);
        let rebuilt = reconstruct(q, op.eigenvalues());
        assert!(max_abs(&(rebuilt - &a)) <= 1e-10 * max_abs(&a).max(1.0));
        assert!(op.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_asymmetric_input_with_amount() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.5, 0.0]);
        match SymmetricOperator::new(a) {
            Err(OslabError::NotSymmetric { asymmetry }) => assert_close!(asymmetry, 0.5, 1e-15),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_is_deterministic() {
        let a = random_symmetric(7, 3);
        let x = eigendecompose(&a).unwrap();
        let y = eigendecompose(&a).unwrap();
        assert_eq!(x.eigenvalues, y.eigenvalues);
        assert_eq!(x.eigenvectors, y.eigenvectors);
    }

    #[test]
    fn functional_calculus_on_diagonals() {
        let sq = builtin(&FunctionSpec::new("monomial").with("degree", 2.0)).unwrap();
        let h = SymmetricOperator::diagonal(&[0.0, 1.0]);
        let out = h.apply_function(sq.as_ref()).unwrap();
        assert_eq!(out.eigenvalues(), &[0.0, 1.0]);

        let h = SymmetricOperator::diagonal(&[0.0, 2f64.ln()]);
        let out = h.function_matrix(exp_fn().as_ref()).unwrap();
        assert_close!(out[(0, 0)], 1.0, 1e-15);
        assert_close!(out[(1, 1)], 2.0, 1e-15);
        assert_close!(out[(0, 1)], 0.0, 1e-15);
    }

    #[test]
    fn exp_matches_scaled_taylor_series() {
        let a = random_symmetric(5, 21);
        let op = SymmetricOperator::new(a.clone()).unwrap();
        let via_spectrum = op.function_matrix(exp_fn().as_ref()).unwrap();

        // exp(A) = (exp(A / 2^s))^(2^s) with a 20-term Taylor series
        let s = 6;
        let scaled = &a / f64::from(1 << s);
        let mut term = DMatrix::<f64>::identity(5, 5);
        let mut series = term.clone();
        for k in 1..20 {
            term = &term * &scaled / k as f64;
            series += &term;
        }
        for _ in 0..s {
            series = &series * &series;
        }
        let rel = max_abs(&(series - &via_spectrum)) / max_abs(&via_spectrum);
        assert!(rel <= 1e-9, "relative error {rel}");
    }

    #[test]
    fn rejects_spectrum_outside_domain() {
        let inv = builtin(
            &FunctionSpec::new("shifted_power")
                .with("p", -1.0)
                .with("shift", 0.0),
        )
        .unwrap();
        let h = SymmetricOperator::diagonal(&[-1.0, 2.0]);
        match h.apply_function(inv.as_ref()) {
            Err(OslabError::OutsideDomain { eigenvalue, .. }) => assert_eq!(eigenvalue, -1.0),
            other => panic!("expected domain rejection, got {other:?}"),
        }
    }

    #[test]
    fn schatten_norms() {
        let a = SymmetricOperator::diagonal(&[3.0, -4.0]);
        assert_close!(a.schatten_norm(1.0).unwrap(), 7.0, 1e-15);
        assert_close!(a.schatten_norm(f64::INFINITY).unwrap(), 4.0, 1e-15);
        assert_close!(a.schatten_norm(2.0).unwrap(), 5.0, 1e-15);
        assert!(a.schatten_norm(0.5).is_err());

        let r = random_symmetric(4, 5);
        let op = SymmetricOperator::new(r.clone()).unwrap();
        let frob = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_close!(op.schatten_norm(2.0).unwrap(), frob, 1e-12);
    }

    #[test]
    fn trace_matches_eigenvalue_sum() {
        assert_eq!(SymmetricOperator::diagonal(&[1.0, 2.0]).trace(), 3.0);
        let swap = SymmetricOperator::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(swap.trace(), 0.0);
        let op = SymmetricOperator::new(random_symmetric(6, 8)).unwrap();
        let sum: f64 = op.eigenvalues().iter().sum();
        assert_close!(op.trace(), sum, 1e-10);
    }

    #[test]
    fn hull_examples() {
        let h = SymmetricOperator::diagonal(&[0.0, 1.0]);
        let v = SymmetricOperator::zeros(2);
        let hull = spectral_hull(&h, &v, -3.0, 5.0, 7).unwrap();
        assert_close!(hull.sampled.lo, 0.0, 1e-6);
        assert_close!(hull.sampled.hi, 1.0, 1e-6);

        let h = SymmetricOperator::diagonal(&[0.0]);
        let v = SymmetricOperator::diagonal(&[1.0]);
        let hull = spectral_hull(&h, &v, 0.0, 1.0, 2).unwrap();
        assert_close!(hull.sampled.lo, 0.0, 1e-6);
        assert_close!(hull.sampled.hi, 1.0, 1e-6);
        assert_eq!(hull.weyl, Interval { lo: 0.0, hi: 1.0 });

        assert!(spectral_hull(&h, &v, 1.0, 0.0, 4).is_err());
        assert!(spectral_hull(&h, &v, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn random_hull_inside_weyl_bounds() {
        let h = SymmetricOperator::new(random_symmetric(4, 1)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 2)).unwrap();
        let hull = spectral_hull(&h, &v, 0.0, 1.0, 101).unwrap();
        let exact_lo = hull.sampled.lo + 1e-6 * (hull.sampled.width() / (1.0 + 2e-6));
        let exact_hi = hull.sampled.hi - 1e-6 * (hull.sampled.width() / (1.0 + 2e-6));
        assert!(hull.weyl.lo <= exact_lo + 1e-12);
        assert!(hull.weyl.hi >= exact_hi - 1e-12);
    }
}
