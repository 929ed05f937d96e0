//! Spectral shift functions of order `n`.
//!
//! `η_n` is the density with `Tr R_n(f, H, V) = ∫ f^(n)(λ) η_n(λ) dλ`. Taking
//! `f_λ(x) = (x − λ)_+^n / n!`, whose n-th derivative is the indicator of
//! `(λ, ∞)`, gives the tail mass `N(λ) = ∫_λ^∞ η_n = Tr R_n(f_λ)`, which is
//! computed exactly. The density is its negative numerical derivative.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OslabError, Result};
use crate::functions::{factorial, Domain, ShiftedPower, SmoothFunction, TruncatedPower};
use crate::io::fmt_f64;
use crate::moi::{moi_trace, MoiProblem};
use crate::spectral::{spectral_hull, Interval, SymmetricOperator};
use crate::verdict::{judge, Expectation, ObservedSign, PerturbationSign, SignVerdict};

/// Samples of `t ∈ [0, 1]` used to locate the spectral hull.
pub const HULL_SAMPLES: usize = 101;

/// Relative widening of the hull on each side of the density grid.
pub const GRID_WIDENING: f64 = 0.05;

pub const MIN_GRID: usize = 16;

/// Relative tolerance of sign verdicts on densities.
pub const SIGN_TOL: f64 = 1e-8;

const MAX_CHEBYSHEV_DEGREE: usize = 128;

#[derive(Debug, Clone, Serialize)]
pub struct SsfEstimate {
    pub order: usize,
    pub grid: Vec<f64>,
    /// `N(λ) = ∫_λ^∞ η_n`.
    pub cdf: Vec<f64>,
    pub density: Vec<f64>,
    /// Sampled hull of the spectra of `H + tV`, `t ∈ [0, 1]`.
    pub hull: Interval,
    pub step: f64,
    pub verdict: ObservedSign,
    /// Worst density value in the observed orientation over `max |η_n|`.
    pub margin: f64,
}

impl SsfEstimate {
    /// `∫ η_n` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// `∫ g η_n` by the trapezoid rule.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let values: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(&x, &d)| g(x) * d)
            .collect();
        trapezoid(&self.grid, &values)
    }

    pub fn max_abs_density(&self) -> f64 {
        self.density.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// True when the tail mass never increases along the grid, up to
    /// `rel_tol · max |N|`.
    pub fn cdf_is_nonincreasing(&self, rel_tol: f64) -> bool {
        let scale = self.cdf.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = (rel_tol * scale).max(1e-300);
        self.cdf.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// CSV with columns `lambda, cdf, density, order, seed`.
    pub fn write_csv(&self, seed: u64, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["lambda", "cdf", "density", "order", "seed"])?;
        for i in 0..self.grid.len() {
            writer.write_record([
                fmt_f64(self.grid[i]),
                fmt_f64(self.cdf[i]),
                fmt_f64(self.density[i]),
                self.order.to_string(),
                seed.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// The pair `(H, V)` with `H + V` diagonalised once.
struct Pair<'a> {
    h: &'a SymmetricOperator,
    v: &'a SymmetricOperator,
    hv: SymmetricOperator,
    n: usize,
    /// Guaranteed enclosure of the spectra of `H + tV`, `t ∈ [0, 1]`.
    support: Interval,
    mass: f64,
}

impl<'a> Pair<'a> {
    fn new(h: &'a SymmetricOperator, v: &'a SymmetricOperator, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OslabError::InvalidParameter("spectral shift order must be at least 1".into()));
        }
        h.check_dim(v)?;
        let hv = h.add_scaled(v, 1.0)?;
        let support = spectral_hull(h, v, 0.0, 1.0, 2)?.weyl;
        let mass = v.eigenvalues().iter().map(|x| x.powi(n as i32)).sum::<f64>() / factorial(n);
        Ok(Self {
            h,
            v,
            hv,
            n,
            support,
            mass,
        })
    }

    /// `Tr R_n(f)`, with `H + V` taken from the cache.
    fn remainder_trace(&self, f: &dyn SmoothFunction) -> Result<f64> {
        let mut total = self.hv.trace_of(f)?;
        for k in 0..self.n {
            total -= moi_trace(&MoiProblem::uniform(self.h, self.v.matrix(), k, f)?);
        }
        Ok(total)
    }

    fn cdf(&self, lambda: f64) -> Result<f64> {
        // f_λ is a polynomial on the whole support left of it and vanishes right of it
        if lambda <= self.support.lo {
            return Ok(self.mass);
        }
        if lambda >= self.support.hi {
            return Ok(0.0);
        }
        self.remainder_trace(&TruncatedPower::new(self.n, lambda)?)
    }
}

/// `N(λ) = ∫_λ^∞ η_n = Tr R_n((x − λ)_+^n / n!)`.
pub fn ssf_cdf(h: &SymmetricOperator, v: &SymmetricOperator, n: usize, lambda: f64) -> Result<f64> {
    Pair::new(h, v, n)?.cdf(lambda)
}

/// Uniform grid of `grid_size` points over the hull widened by 5% per side.
pub fn ssf_density(h: &SymmetricOperator, v: &SymmetricOperator, n: usize, grid_size: usize) -> Result<SsfEstimate> {
    if grid_size < MIN_GRID {
        return Err(OslabError::InvalidParameter(format!(
            "density grids need at least {MIN_GRID} points, got {grid_size}"
        )));
    }
    let hull = ssf_hull(h, v)?;
    ssf_density_on(h, v, n, &density_grid(hull, grid_size))
}

/// Sampled hull of the spectra of `H + tV` over `t ∈ [0, 1]`.
pub fn ssf_hull(h: &SymmetricOperator, v: &SymmetricOperator) -> Result<Interval> {
    Ok(spectral_hull(h, v, 0.0, 1.0, HULL_SAMPLES)?.sampled)
}

/// `grid_size` equispaced points over `hull` widened by 5% per side (by 0.5
/// for a degenerate hull).
pub fn density_grid(hull: Interval, grid_size: usize) -> Vec<f64> {
    let margin = if hull.width() > 0.0 {
        GRID_WIDENING * hull.width()
    } else {
        0.5
    };
    hull.widen(margin).linspace(grid_size)
}

/// Density estimate on a caller-supplied uniform ascending grid.
pub fn ssf_density_on(h: &SymmetricOperator, v: &SymmetricOperator, n: usize, grid: &[f64]) -> Result<SsfEstimate> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OslabError::InvalidParameter(
            "density grid must be strictly ascending with at least 3 points".into(),
        ));
    }
    let pair = Pair::new(h, v, n)?;
    let hull = ssf_hull(h, v)?;
    let cdf = grid
        .par_iter()
        .map(|&x| pair.cdf(x))
        .collect::<Result<Vec<_>>>()?;
    let last = grid.len() - 1;
    let density: Vec<f64> = (0..=last)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == last => (last - 1, last),
                i => (i - 1, i + 1),
            };
            -(cdf[b] - cdf[a]) / (grid[b] - grid[a])
        })
        .collect();
    let sign = judge(&density, Expectation::NoClaim, SIGN_TOL);
    let margin = match sign.observed {
        ObservedSign::Nonpos => judge(&density, Expectation::Nonpos, SIGN_TOL).margin,
        _ => sign.margin,
    };
    Ok(SsfEstimate {
        order: n,
        step: (grid[last] - grid[0]) / last as f64,
        grid: grid.to_vec(),
        cdf,
        density,
        hull,
        verdict: sign.observed,
        margin,
    })
}

/// Moments `∫ λ^m η_n dλ` for `m = 0..=m_max`.
pub fn ssf_moments(h: &SymmetricOperator, v: &SymmetricOperator, n: usize, m_max: usize) -> Result<Vec<f64>> {
    ssf_moments_scaled(h, v, n, m_max, 0.0, 1.0)
}

/// Moments `∫ u^m η_n dλ` in the rescaled variable `u = (λ − center) / radius`,
/// from `Tr R_n(p_m)` with `p_m(x) = radius^n m!/(m+n)! u^(m+n)`.
pub fn ssf_moments_scaled(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    m_max: usize,
    center: f64,
    radius: f64,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !center.is_finite() {
        return Err(OslabError::InvalidParameter(format!(
            "moment rescaling needs a finite center and positive radius, got {center}, {radius}"
        )));
    }
    let pair = Pair::new(h, v, n)?;
    (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let degree = m + n;
            let coeff = radius.powi(n as i32) * factorial(m) / factorial(degree) / radius.powi(degree as i32);
            pair.remainder_trace(&ShiftedPower::new(degree as f64, center, coeff)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentIntegral {
    pub value: f64,
    /// Degree of the Chebyshev interpolant of `f^(n)`.
    pub degree: usize,
}

/// `∫ f^(n) η_n` through the moments: `f^(n)` is interpolated by a Chebyshev
/// series on the widened hull and contracted with the Chebyshev moments
/// `∫ T_j(u) η_n dλ`.
pub fn trace_formula_via_moments(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
) -> Result<MomentIntegral> {
    if f.max_order() < n {
        return Err(OslabError::OrderTooHigh {
            function: f.name().to_string(),
            max_order: f.max_order(),
            requested: n,
        });
    }
    let hull = ssf_hull(h, v)?;
    let span = if hull.width() > 0.0 {
        hull.widen(GRID_WIDENING * hull.width())
    } else {
        hull.widen(0.5)
    };
    let center = 0.5 * (span.lo + span.hi);
    let radius = 0.5 * span.width();
    let coeffs = chebyshev_fit(|u| f.eval(center + radius * u, n))?;
    let moments = chebyshev_moments(h, v, n, coeffs.len() - 1, center, radius)?;
    let value = coeffs.iter().zip(&moments).map(|(a, m)| a * m).sum();
    Ok(MomentIntegral {
        value,
        degree: coeffs.len() - 1,
    })
}

/// `∫ T_j(u) η_n dλ` for `j ≤ degree`, `u = (λ − center) / radius`, as
/// `Tr R_n` of the n-fold antiderivative of `T_j(u(λ))`.
pub fn chebyshev_moments(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    degree: usize,
    center: f64,
    radius: f64,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !center.is_finite() {
        return Err(OslabError::InvalidParameter(format!(
            "moment rescaling needs a finite center and positive radius, got {center}, {radius}"
        )));
    }
    let pair = Pair::new(h, v, n)?;
    (0..=degree)
        .into_par_iter()
        .map(|j| {
            let mut t = vec![0.0; j + 1];
            t[j] = 1.0;
            pair.remainder_trace(&ChebyshevAntiderivative::new(&t, n, center, radius))
        })
        .collect()
}

/// The n-fold antiderivative in `λ` of a Chebyshev series in
/// `u = (λ − center) / radius`, with every derivative kept in Chebyshev form.
#[derive(Debug)]
struct ChebyshevAntiderivative {
    center: f64,
    radius: f64,
    /// `derivatives[k]` holds the coefficients of the k-th derivative.
    derivatives: Vec<Vec<f64>>,
}

impl ChebyshevAntiderivative {
    fn new(coeffs: &[f64], n: usize, center: f64, radius: f64) -> Self {
        let mut g = coeffs.to_vec();
        for _ in 0..n {
            g = chebyshev_integral(&g, radius);
        }
        let mut derivatives = vec![g];
        while derivatives.last().is_some_and(|c| c.len() > 1) {
            let next = chebyshev_derivative(derivatives.last().unwrap(), radius);
            derivatives.push(next);
        }
        Self {
            center,
            radius,
            derivatives,
        }
    }
}

impl SmoothFunction for ChebyshevAntiderivative {
    fn name(&self) -> &str {
        "chebyshev_antiderivative"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        usize::MAX / 2
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        self.derivatives
            .get(k)
            .map_or(0.0, |c| clenshaw(c, (x - self.center) / self.radius))
    }

    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// Antiderivative in `λ` of `Σ c_k T_k(u)`, up to a constant.
fn chebyshev_integral(c: &[f64], radius: f64) -> Vec<f64> {
    let at = |k: usize| c.get(k).copied().unwrap_or(0.0);
    let mut out = vec![0.0; c.len() + 1];
    out[1] = at(0) - 0.5 * at(2);
    for k in 2..out.len() {
        out[k] = (at(k - 1) - at(k + 1)) / (2 * k) as f64;
    }
    out.iter_mut().for_each(|x| *x *= radius);
    out
}

/// Derivative in `λ` of `Σ c_k T_k(u)`.
fn chebyshev_derivative(c: &[f64], radius: f64) -> Vec<f64> {
    let len = c.len();
    let mut out = vec![0.0; len + 1];
    for k in (1..len).rev() {
        out[k - 1] = out[k + 1] + 2.0 * k as f64 * c[k];
    }
    out[0] *= 0.5;
    out.truncate(len - 1);
    out.iter_mut().for_each(|x| *x /= radius);
    out
}

fn clenshaw(c: &[f64], u: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * u * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    u * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// Chebyshev coefficients of `g` on `[-1, 1]`, doubling the number of nodes
/// until the tail is below `1e-15` of the largest coefficient or below the
/// rounding noise of the samples.
fn chebyshev_fit(g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let mut count = 16;
    loop {
        let nodes: Vec<f64> = (0..count)
            .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / count as f64).cos())
            .collect();
        let values: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
        let mut coeffs: Vec<f64> = (0..count)
            .map(|j| {
                let s: f64 = (0..count)
                    .map(|k| values[k] * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / count as f64).cos())
                    .sum();
                2.0 * s / count as f64
            })
            .collect();
        coeffs[0] *= 0.5;
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tail = coeffs[count - 4..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let noise = 64.0 * f64::EPSILON * values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail <= (1e-15 * scale).max(noise) || scale == 0.0 {
            let keep = coeffs
                .iter()
                .rposition(|c| c.abs() > 1e-17 * scale)
                .map_or(1, |i| i + 1);
            coeffs.truncate(keep);
            return Ok(coeffs);
        }
        if count >= MAX_CHEBYSHEV_DEGREE {
            return Err(OslabError::InvalidParameter(format!(
                "derivative is not resolved by a degree-{count} Chebyshev series (tail {tail:e})"
            )));
        }
        count *= 2;
    }
}

/// Judges the estimate against the sign predicted for its order and the
/// sign class of `V`. Odd orders with indefinite `V` always pass.
pub fn positivity_verdict(est: &SsfEstimate, v_sign: PerturbationSign) -> SignVerdict {
    judge(&est.density, Expectation::for_order(est.order, v_sign), SIGN_TOL)
}

/// `Tr(V^n) / n!`, the total mass of `η_n`.
pub fn ssf_mass(v: &SymmetricOperator, n: usize) -> f64 {
    v.eigenvalues().iter().map(|x| x.powi(n as i32)).sum::<f64>() / factorial(n)
}

/// `V^n` as a dense matrix.
pub fn matrix_power(v: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    (0..n).fold(DMatrix::identity(v.nrows(), v.ncols()), |acc, _| acc * v)
}
