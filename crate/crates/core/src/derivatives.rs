//! Derivatives of `t ↦ f(H + tV)` and the operator Taylor remainder
//!
//! ```text
//! R_n(f, H, V) = f(H + V) − Σ_{k<n} (1/k!) d^k/dt^k f(H + tV)|_{t=0}
//! ```
//!
//! in three independent forms: direct subtraction, a perturbation form with a
//! single order-`(n-1)` integral difference, and Gauss–Legendre quadrature of
//! the derivative trace.

use std::borrow::Cow;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OslabError, Result};
use crate::functions::{factorial, ShiftedPower, SmoothFunction};
use crate::moi::{moi_evaluate, moi_trace, MoiProblem};
use crate::spectral::{spectral_hull, SymmetricOperator};
use crate::verdict::{judge, Expectation, PerturbationSign, SignVerdict};

const FIRST_QUADRATURE_ORDER: usize = 8;
const MAX_DOUBLINGS: usize = 10;

/// Relative tolerance of every sign verdict in this module.
pub const SIGN_TOL: f64 = 1e-8;

fn shifted<'a>(h: &'a SymmetricOperator, v: &SymmetricOperator, s: f64) -> Result<Cow<'a, SymmetricOperator>> {
    if s == 0.0 {
        Ok(Cow::Borrowed(h))
    } else {
        Ok(Cow::Owned(h.add_scaled(v, s)?))
    }
}

fn require_order(f: &dyn SmoothFunction, needed: usize) -> Result<()> {
    if f.max_order() < needed {
        return Err(OslabError::OrderTooHigh {
            function: f.name().to_string(),
            max_order: f.max_order(),
            requested: needed,
        });
    }
    Ok(())
}

/// `d^k/dt^k f(H + tV)` at `t = s`, i.e. `k! T^{(H+sV)^{k+1}}_{f^[k]}(V, ..., V)`.
pub fn operator_derivative(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    k: usize,
    s: f64,
) -> Result<DMatrix<f64>> {
    require_order(f, k + 1)?;
    h.check_dim(v)?;
    let base = shifted(h, v, s)?;
    let problem = MoiProblem::uniform(&base, v.matrix(), k, f)?;
    Ok(moi_evaluate(&problem) * factorial(k))
}

/// `ψ(s) = Tr d^n/dt^n f(H + tV)|_{t=s}`.
pub fn derivative_trace(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    s: f64,
) -> Result<f64> {
    require_order(f, n)?;
    h.check_dim(v)?;
    let base = shifted(h, v, s)?;
    let problem = MoiProblem::uniform(&base, v.matrix(), n, f)?;
    Ok(moi_trace(&problem) * factorial(n))
}

/// Weights of the central stencil for the `k`-th derivative on the integer
/// offsets `-m..=m`, by Fornberg's recursion.
pub fn central_stencil(k: usize, m: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=2 * m).map(|j| j as f64 - m as f64).collect();
    let count = xs.len();
    // c[j][d]: weight of node j for derivative d, growing the node set one at a time
    let mut c = vec![vec![0.0; k + 1]; count];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..count {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            for d in (0..=k.min(i)).rev() {
                let prev_i = if d > 0 { c[i - 1][d - 1] } else { 0.0 };
                if j == i - 1 {
                    c[i][d] = c1 * (d as f64 * prev_i - xs[i - 1] * c[i - 1][d]) / c2;
                }
                let prev_j = if d > 0 { c[j][d - 1] } else { 0.0 };
                c[j][d] = (xs[i] * c[j][d] - d as f64 * prev_j) / c3;
            }
        }
        c1 = c2;
    }
    c.iter().map(|row| row[k]).collect()
}

/// Half-width of the fourth-order central stencil for the `k`-th derivative.
fn stencil_half_width(k: usize) -> usize {
    (k.saturating_sub(1)) / 2 + 2
}

/// Default oracle step `ε^(1/(k+4)) / ‖V‖`.
pub fn default_step(k: usize, v: &SymmetricOperator) -> f64 {
    f64::EPSILON.powf(1.0 / (k as f64 + 4.0)) / v.operator_norm().max(f64::MIN_POSITIVE)
}

/// Fourth-order central differences of `t ↦ f(H + tV)` at `t = s` with step
/// `step`, plus one Richardson level `(16 D(step/2) − D(step)) / 15`.
pub fn finite_difference_oracle(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    k: usize,
    s: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    if !(step > 0.0) || k == 0 {
        return Err(OslabError::InvalidParameter(format!(
            "finite differences need k >= 1 and a positive step, got k={k}, h={step}"
        )));
    }
    h.check_dim(v)?;
    let m = stencil_half_width(k);
    let weights = central_stencil(k, m);
    let stencil = |dt: f64| -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(h.dim(), h.dim());
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let t = s + (j as f64 - m as f64) * dt;
            acc += h.add_scaled(v, t)?.function_matrix(f)? * w;
        }
        Ok(acc / dt.powi(k as i32))
    };
    let coarse = stencil(step)?;
    let fine = stencil(step / 2.0)?;
    Ok((fine * 16.0 - coarse) / 15.0)
}

/// `f(H + V) − Σ_{k<n} (1/k!) d^k/dt^k f(H + tV)|_{t=0}`.
pub fn taylor_remainder_direct(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
) -> Result<DMatrix<f64>> {
    check_remainder_args(f, h, v, n)?;
    let mut r = h.add_scaled(v, 1.0)?.function_matrix(f)?;
    for k in 0..n {
        // (1/k!) D^k = T^{(H)^{k+1}}_{f^[k]}(V^k)
        r -= moi_evaluate(&MoiProblem::uniform(h, v.matrix(), k, f)?);
    }
    Ok(r)
}

/// Trace of [`taylor_remainder_direct`], never materialising the integrals.
pub fn taylor_remainder_trace(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
) -> Result<f64> {
    check_remainder_args(f, h, v, n)?;
    let mut total = h.add_scaled(v, 1.0)?.trace_of(f)?;
    for k in 0..n {
        total -= moi_trace(&MoiProblem::uniform(h, v.matrix(), k, f)?);
    }
    Ok(total)
}

fn check_remainder_args(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
) -> Result<()> {
    if n == 0 {
        return Err(OslabError::InvalidParameter("remainder order must be at least 1".into()));
    }
    require_order(f, n)?;
    h.check_dim(v)
}

/// `f(H + V) − f(H) = T^{H+V, H}_{f^[1]}(V)`.
pub fn birman_solomyak_difference(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
) -> Result<DMatrix<f64>> {
    require_order(f, 1)?;
    h.check_dim(v)?;
    let hv = h.add_scaled(v, 1.0)?;
    Ok(moi_evaluate(&MoiProblem::new(vec![&hv, h], vec![v.matrix()], f)?))
}

/// `T^{H, H+V, H, ..., H}_{f^[n-1]}(V^{n-1}) − T^{(H)^n}_{f^[n-1]}(V^{n-1})`
/// for `n >= 2`. The `n = 1` remainder is [`birman_solomyak_difference`].
pub fn taylor_remainder_via_perturbation(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(OslabError::InvalidParameter(
            "the perturbation form needs n >= 2; use birman_solomyak_difference for n = 1".into(),
        ));
    }
    check_remainder_args(f, h, v, n)?;
    let hv = h.add_scaled(v, 1.0)?;
    let mut bases = vec![h, &hv];
    bases.extend(std::iter::repeat(h).take(n - 2));
    let shifted = moi_evaluate(&MoiProblem::new(bases, vec![v.matrix(); n - 1], f)?);
    let plain = moi_evaluate(&MoiProblem::uniform(h, v.matrix(), n - 1, f)?);
    Ok(shifted - plain)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    /// Gauss–Legendre order of the accepted value.
    pub order: usize,
    /// `|I_order − I_{order/2}|`.
    pub increment: f64,
}

/// `(1/(n-1)!) ∫_0^1 (1 − s)^(n-1) ψ(s) ds` by Gauss–Legendre rules of order
/// 8, 16, 32, ... until two successive values differ by less than `quad_tol`.
pub fn remainder_trace_integral(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    quad_tol: f64,
) -> Result<QuadratureResult> {
    check_remainder_args(f, h, v, n)?;
    if !(quad_tol > 0.0) {
        return Err(OslabError::InvalidParameter(format!(
            "quadrature tolerance must be positive, got {quad_tol}"
        )));
    }
    let norm = factorial(n - 1);
    let integrate = |order: usize| -> Result<f64> {
        let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("order is positive"));
        let terms: Vec<f64> = rule
            .as_node_weight_pairs()
            .par_iter()
            .map(|&(x, w)| {
                let s = 0.5 * (x + 1.0);
                Ok(w * (1.0 - s).powi(n as i32 - 1) * derivative_trace(f, h, v, n, s)?)
            })
            .collect::<Result<_>>()?;
        Ok(0.5 * terms.iter().sum::<f64>() / norm)
    };
    let mut order = FIRST_QUADRATURE_ORDER;
    let mut previous = integrate(order)?;
    for _ in 0..MAX_DOUBLINGS {
        order *= 2;
        let value = integrate(order)?;
        let increment = (value - previous).abs();
        if increment < quad_tol {
            return Ok(QuadratureResult {
                value,
                order,
                increment,
            });
        }
        previous = value;
    }
    Err(OslabError::QuadratureNotConverged {
        previous,
        last: integrate(order)?,
    })
}

/// Which clause of the power-function sign rules applies to `(p, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerClause {
    /// `p > 0`, `1 <= k <= ⌈p⌉`: the trace derivative is nonnegative.
    LowOrder,
    /// `p > 0`, `k >= ⌈p⌉`: `(−1)^(k−⌈p⌉)` times it is nonnegative.
    HighOrder,
    /// `p < 0`: `(−1)^k` times it is nonnegative.
    Negative,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerSignReport {
    pub p: f64,
    pub lambda: f64,
    pub k: usize,
    pub s_grid: Vec<f64>,
    /// `d^k/dt^k Tr (H + tV − λ)^p` at each grid point.
    pub values: Vec<f64>,
    /// Each applicable clause with its verdict on the signed values.
    pub clauses: Vec<(PowerClause, SignVerdict)>,
    pub pass: bool,
}

/// Checks the sign rules for `t ↦ Tr (H + tV − λ)^p` with `V >= 0` on `s_grid`.
pub fn power_sign_report(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    p: f64,
    lambda: f64,
    k: usize,
    s_grid: &[f64],
) -> Result<PowerSignReport> {
    if k == 0 || p == 0.0 || !p.is_finite() {
        return Err(OslabError::InvalidParameter(format!(
            "power sign rules need k >= 1 and finite p != 0, got k={k}, p={p}"
        )));
    }
    let integer = p > 0.0 && p.fract() == 0.0;
    let bottom = h.min_eigenvalue();
    if (integer && lambda > bottom) || (!integer && lambda >= bottom) {
        return Err(OslabError::InvalidParameter(format!(
            "λ = {lambda} must lie below the spectrum of H (λ_min = {bottom})"
        )));
    }
    if PerturbationSign::classify(v) != PerturbationSign::Psd {
        return Err(OslabError::InvalidParameter("power sign rules need V >= 0".into()));
    }
    if let Some(&s) = s_grid.iter().find(|&&s| s < 0.0) {
        return Err(OslabError::DomainViolation {
            t: s,
            reason: "the sign rules cover s >= 0 only".into(),
        });
    }
    let f = ShiftedPower::new(p, lambda, 1.0)?;
    let values = s_grid
        .par_iter()
        .map(|&s| derivative_trace(&f, h, v, k, s))
        .collect::<Result<Vec<_>>>()?;

    let mut clauses = Vec::new();
    let signed = |sign: f64| -> Vec<f64> { values.iter().map(|x| sign * x).collect() };
    if p > 0.0 {
        let ceil = p.ceil() as usize;
        if k <= ceil {
            clauses.push((PowerClause::LowOrder, judge(&values, Expectation::Nonneg, SIGN_TOL)));
        }
        if k >= ceil {
            let sign = if (k - ceil) % 2 == 0 { 1.0 } else { -1.0 };
            clauses.push((PowerClause::HighOrder, judge(&signed(sign), Expectation::Nonneg, SIGN_TOL)));
        }
    } else {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        clauses.push((PowerClause::Negative, judge(&signed(sign), Expectation::Nonneg, SIGN_TOL)));
    }
    let pass = clauses.iter().all(|(_, v)| v.pass);
    Ok(PowerSignReport {
        p,
        lambda,
        k,
        s_grid: s_grid.to_vec(),
        values,
        clauses,
        pass,
    })
}

/// `ψ` sampled on `s_grid` and judged against the parity rule: for
/// `f^(n) >= 0` on the spectral hull, `ψ >= 0` for even `n`, and for odd
/// `n` `ψ` carries the sign of a definite `V`.
pub fn derivative_trace_verdict(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    s_grid: &[f64],
) -> Result<(Vec<f64>, SignVerdict)> {
    require_order(f, n)?;
    if s_grid.is_empty() {
        return Err(OslabError::InvalidParameter("empty s-grid".into()));
    }
    let lo = s_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hull = spectral_hull(h, v, lo, hi.max(lo), 2.max(s_grid.len()))?.weyl;
    let probe = hull.linspace(201);
    let sup = probe.iter().map(|&x| f.eval(x, n).abs()).fold(0.0, f64::max);
    if let Some(&x) = probe.iter().find(|&&x| f.eval(x, n) < -1e-12 * sup.max(1.0)) {
        return Err(OslabError::InvalidParameter(format!(
            "`{}` has a negative order-{n} derivative at {x}, inside the spectral hull {hull}",
            f.name()
        )));
    }
    let values = s_grid
        .par_iter()
        .map(|&s| derivative_trace(f, h, v, n, s))
        .collect::<Result<Vec<_>>>()?;
    let expectation = Expectation::for_order(n, PerturbationSign::classify(v));
    let verdict = judge(&values, expectation, SIGN_TOL);
    Ok((values, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{builtin, FunctionSpec, Monomial, Polynomial};
    use crate::spectral::{max_abs, trace};
    use crate::testing::random_symmetric;

    fn op(rows: &[Vec<f64>]) -> SymmetricOperator {
        SymmetricOperator::from_rows(rows).unwrap()
    }

    fn relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        max_abs(&(a - b)) / max_abs(b).max(1e-300)
    }

    fn square() -> Polynomial {
        Monomial::new(2, 1.0)
    }

    #[test]
    fn stencil_weights_match_textbook_values() {
        let w = central_stencil(1, 2);
        let expected = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expected) {
            assert_close!(*a, b, 1e-14);
        }
        let w = central_stencil(2, 2);
        let expected = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expected) {
            assert_close!(*a, b, 1e-14);
        }
    }

    #[test]
    fn first_derivative_of_square_is_anticommutator() {
        let h = SymmetricOperator::diagonal(&[1.0, 2.0]);
        let v = op(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let d = operator_derivative(&square(), &h, &v, 1, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]);
        assert!(max_abs(&(d - expected)) < 1e-14);
    }

    #[test]
    fn second_derivative_of_square_is_twice_v_squared() {
        let h = SymmetricOperator::new(random_symmetric(4, 1)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 2)).unwrap();
        for s in [0.0, 0.7, -1.3] {
            let d = operator_derivative(&square(), &h, &v, 2, s).unwrap();
            let expected = v.matrix() * v.matrix() * 2.0;
            assert!(relative(&d, &expected) < 1e-12);
        }
    }

    #[test]
    fn exp_third_derivative_matches_finite_differences() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::new(random_symmetric(5, 3)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(5, 4)).unwrap();
        let exact = operator_derivative(f.as_ref(), &h, &v, 3, 0.3).unwrap();
        let oracle = finite_difference_oracle(f.as_ref(), &h, &v, 3, 0.3, default_step(3, &v)).unwrap();
        assert!(relative(&exact, &oracle) < 1e-6, "{}", relative(&exact, &oracle));
    }

    #[test]
    fn oracle_is_exact_on_low_degree_polynomials() {
        let h = SymmetricOperator::new(random_symmetric(3, 5)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(3, 6)).unwrap();
        let linear = Polynomial::new(vec![0.5, 2.0]);
        let d = finite_difference_oracle(&linear, &h, &v, 1, 0.0, 0.1).unwrap();
        assert!(relative(&d, &(v.matrix() * 2.0)) < 1e-12);
        let d = finite_difference_oracle(&square(), &h, &v, 2, 0.0, 0.1).unwrap();
        assert!(relative(&d, &(v.matrix() * v.matrix() * 2.0)) < 1e-10);
    }

    #[test]
    fn halving_the_step_reduces_oracle_error() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::new(random_symmetric(4, 7)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 8)).unwrap();
        let exact = operator_derivative(f.as_ref(), &h, &v, 2, 0.0).unwrap();
        let step = 0.2 / v.operator_norm();
        let e1 = relative(&finite_difference_oracle(f.as_ref(), &h, &v, 2, 0.0, step).unwrap(), &exact);
        let e2 = relative(&finite_difference_oracle(f.as_ref(), &h, &v, 2, 0.0, step / 2.0).unwrap(), &exact);
        assert!(e1 / e2 >= 4.0, "{e1} -> {e2}");
    }

    #[test]
    fn derivative_of_previous_order_by_finite_differences() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::new(random_symmetric(4, 9)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 10)).unwrap();
        let step = 1e-2 / v.operator_norm();
        let w = central_stencil(1, 2);
        for k in 2..=3 {
            let mut fd = DMatrix::zeros(4, 4);
            for (j, &wj) in w.iter().enumerate() {
                let s = 0.2 + (j as f64 - 2.0) * step;
                fd += operator_derivative(f.as_ref(), &h, &v, k - 1, s).unwrap() * wj;
            }
            fd /= step;
            let exact = operator_derivative(f.as_ref(), &h, &v, k, 0.2).unwrap();
            assert!(relative(&fd, &exact) < 1e-5);
        }
    }

    #[test]
    fn derivative_trace_examples() {
        let h = SymmetricOperator::diagonal(&[1.0, 2.0]);
        let v = op(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let psi = derivative_trace(&square(), &h, &v, 1, 0.0).unwrap();
        assert_close!(psi, 2.0 * trace(&(h.matrix() * v.matrix())), 1e-14);

        let inverse = builtin(&FunctionSpec::new("shifted_power").with("p", -1.0)).unwrap();
        let psi = derivative_trace(inverse.as_ref(), &SymmetricOperator::diagonal(&[2.0]), &SymmetricOperator::diagonal(&[1.0]), 1, 0.0)
            .unwrap();
        assert_close!(psi, -0.25, 1e-15);
    }

    #[test]
    fn remainder_of_square_is_v_squared() {
        let h = SymmetricOperator::new(random_symmetric(4, 11)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 12)).unwrap();
        let v2 = v.matrix() * v.matrix();
        let r1 = taylor_remainder_direct(&square(), &h, &v, 1).unwrap();
        assert!(relative(&r1, &(&v2 + h.matrix() * v.matrix() + v.matrix() * h.matrix())) < 1e-12);
        let r2 = taylor_remainder_direct(&square(), &h, &v, 2).unwrap();
        assert!(relative(&r2, &v2) < 1e-12);
        let r2 = taylor_remainder_via_perturbation(&square(), &h, &v, 2).unwrap();
        assert!(relative(&r2, &v2) < 1e-12);
        let r3 = taylor_remainder_direct(&square(), &h, &v, 3).unwrap();
        assert!(max_abs(&r3) < 1e-12 * max_abs(&v2));
    }

    #[test]
    fn commuting_remainder_is_scalar_remainder() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::diagonal(&[0.1, -0.4, 1.2]);
        let v = SymmetricOperator::diagonal(&[0.5, 0.3, -0.8]);
        let r = taylor_remainder_via_perturbation(f.as_ref(), &h, &v, 3).unwrap();
        for i in 0..3 {
            let (x, y) = (h.matrix()[(i, i)], v.matrix()[(i, i)]);
            let scalar = (x + y).exp() - x.exp() * (1.0 + y + y * y / 2.0);
            assert_close!(r[(i, i)], scalar, 1e-14);
        }
        assert!(r.iter().enumerate().all(|(idx, x)| idx % 4 == 0 || x.abs() < 1e-15));
    }

    #[test]
    fn perturbation_form_rejects_first_order() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::identity(2);
        assert!(taylor_remainder_via_perturbation(f.as_ref(), &h, &h, 1).is_err());
        let bs = birman_solomyak_difference(f.as_ref(), &h, &h).unwrap();
        let r1 = taylor_remainder_direct(f.as_ref(), &h, &h, 1).unwrap();
        assert!(relative(&bs, &r1) < 1e-13);
    }

    #[test]
    fn three_remainder_forms_agree() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::new(random_symmetric(4, 13)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(4, 14) * 0.5).unwrap();
        let direct = taylor_remainder_direct(f.as_ref(), &h, &v, 3).unwrap();
        let perturbed = taylor_remainder_via_perturbation(f.as_ref(), &h, &v, 3).unwrap();
        assert!(max_abs(&(&direct - &perturbed)) < 1e-9 * max_abs(&direct).max(1.0));
        let integral = remainder_trace_integral(f.as_ref(), &h, &v, 3, 1e-8).unwrap();
        assert_close!(integral.value, trace(&direct), 1e-8 * trace(&direct).abs().max(1.0));
        assert_close!(taylor_remainder_trace(f.as_ref(), &h, &v, 3).unwrap(), trace(&direct), 1e-10);
    }

    #[test]
    fn first_order_integral_of_square() {
        let h = SymmetricOperator::diagonal(&[1.0, 2.0]);
        let v = op(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let r = remainder_trace_integral(&square(), &h, &v, 1, 1e-12).unwrap();
        assert_close!(r.value, 2.0, 1e-13);
    }

    #[test]
    fn monomial_remainder_keeps_only_the_top_word() {
        let h = SymmetricOperator::new(random_symmetric(3, 15)).unwrap();
        let v = SymmetricOperator::new(random_symmetric(3, 16)).unwrap();
        for n in 1..=4 {
            let f = Monomial::new(n, 1.0 / factorial(n));
            let vn = (0..n).fold(DMatrix::identity(3, 3), |acc, _| acc * v.matrix());
            let expected = trace(&vn) / factorial(n);
            let direct = taylor_remainder_trace(&f, &h, &v, n).unwrap();
            assert_close!(direct, expected, 1e-10 * expected.abs().max(1.0));
            let integral = remainder_trace_integral(&f, &h, &v, n, 1e-12).unwrap();
            assert_close!(integral.value, expected, 1e-10 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn power_rules_scalar_and_quadratic() {
        let h = SymmetricOperator::diagonal(&[2.0]);
        let v = SymmetricOperator::diagonal(&[1.0]);
        let r = power_sign_report(&h, &v, -1.0, 0.0, 1, &[0.0]).unwrap();
        assert_close!(r.values[0], -0.25, 1e-15);
        assert!(r.pass);
        assert_eq!(r.clauses[0].0, PowerClause::Negative);

        let h = SymmetricOperator::diagonal(&[0.5, 1.5]);
        let v = SymmetricOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let r = power_sign_report(&h, &v, 2.0, 0.0, 1, &[0.0, 0.5, 1.0]).unwrap();
        assert!(r.pass);
        for (&s, &x) in r.s_grid.iter().zip(&r.values) {
            let hs = h.add_scaled(&v, s).unwrap();
            assert_close!(x, 2.0 * trace(&(hs.matrix() * v.matrix())), 1e-12);
        }
    }

    #[test]
    fn power_rules_reject_lambda_inside_spectrum() {
        let h = SymmetricOperator::diagonal(&[1.0, 2.0]);
        let v = SymmetricOperator::identity(2);
        assert!(power_sign_report(&h, &v, 0.5, 1.0, 1, &[0.0]).is_err());
        assert!(power_sign_report(&h, &v, 2.0, 1.0, 1, &[0.0]).is_ok());
        let indefinite = SymmetricOperator::diagonal(&[1.0, -1.0]);
        assert!(power_sign_report(&h, &indefinite, 2.0, 0.0, 1, &[0.0]).is_err());
    }

    #[test]
    fn derivative_trace_verdict_follows_parity() {
        let f = builtin(&FunctionSpec::new("exp")).unwrap();
        let h = SymmetricOperator::new(random_symmetric(4, 17)).unwrap();
        let a = random_symmetric(4, 18);
        let psd = SymmetricOperator::new(&a * &a).unwrap();
        let nsd = psd.scaled(-1.0);
        let grid = crate::spectral::linspace(0.0, 1.0, 11);
        let (_, v) = derivative_trace_verdict(f.as_ref(), &h, &psd, 3, &grid).unwrap();
        assert_eq!(v.expectation, Expectation::Nonneg);
        assert!(v.pass);
        let (_, v) = derivative_trace_verdict(f.as_ref(), &h, &nsd, 3, &grid).unwrap();
        assert_eq!(v.expectation, Expectation::Nonpos);
        assert!(v.pass);
        let indefinite = SymmetricOperator::new(random_symmetric(4, 19)).unwrap();
        let (_, v) = derivative_trace_verdict(f.as_ref(), &h, &indefinite, 2, &grid).unwrap();
        assert!(v.pass);
    }
}
