use serde::Serialize;

use super::SmoothFunction;
use crate::error::{OslabError, Result};
use crate::spectral::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    CompletelyMonotone,
    Bernstein,
    Neither,
}

/// Sampled signs of one derivative order.
#[derive(Debug, Clone, Serialize)]
pub struct SignRow {
    pub order: usize,
    /// `min (-1)^k f^(k)` over the grid.
    pub min_cm: f64,
    /// `min (-1)^(k-1) f^(k)` over the grid (`min f` for k = 0).
    pub min_bernstein: f64,
    pub tol: f64,
    /// First grid location where `f^(k)` changes sign.
    pub sign_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignReport {
    pub rows: Vec<SignRow>,
    pub completely_monotone: bool,
    pub bernstein: bool,
    pub verdict: SignClass,
}

/// Samples `f^(k)` for `k_lo <= k <= k_hi` on `count` equispaced points of
/// `grid` and classifies the sign pattern.
pub fn verify_derivative_signs(
    f: &dyn SmoothFunction,
    k_lo: usize,
    k_hi: usize,
    grid: Interval,
    count: usize,
) -> Result<SignReport> {
    if k_hi > f.max_order() {
        return Err(OslabError::OrderTooHigh {
            function: f.name().to_string(),
            max_order: f.max_order(),
            requested: k_hi,
        });
    }
    if k_lo > k_hi || count < 2 {
        return Err(OslabError::InvalidParameter(format!(
            "need k_lo <= k_hi and at least two grid points, got k in [{k_lo}, {k_hi}] with {count} points"
        )));
    }
    let points = grid.linspace(count);
    let mut rows = Vec::with_capacity(k_hi - k_lo + 1);
    for k in k_lo..=k_hi {
        let values: Vec<f64> = points.iter().map(|&x| f.eval(x, k)).collect();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = (1e-12 * scale).max(1e-300);
        let cm_sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let bern_sign = if k == 0 { 1.0 } else { -cm_sign };
        let min_cm = values.iter().map(|v| cm_sign * v).fold(f64::INFINITY, f64::min);
        let min_bernstein = values.iter().map(|v| bern_sign * v).fold(f64::INFINITY, f64::min);
        rows.push(SignRow {
            order: k,
            min_cm,
            min_bernstein,
            tol,
            sign_change: first_sign_change(&points, &values, tol),
        });
    }
    let completely_monotone = rows.iter().all(|r| r.min_cm >= -r.tol);
    let bernstein = rows.iter().all(|r| r.min_bernstein >= -r.tol);
    let verdict = if completely_monotone {
        SignClass::CompletelyMonotone
    } else if bernstein {
        SignClass::Bernstein
    } else {
        SignClass::Neither
    };
    Ok(SignReport {
        rows,
        completely_monotone,
        bernstein,
        verdict,
    })
}

fn first_sign_change(points: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    let mut last_sign = 0.0;
    let mut zero_at = None;
    for (&x, &v) in points.iter().zip(values) {
        if v.abs() <= tol {
            zero_at.get_or_insert(x);
            continue;
        }
        let sign = v.signum();
        if last_sign != 0.0 && sign != last_sign {
            return Some(zero_at.unwrap_or(x));
        }
        last_sign = sign;
        zero_at = None;
    }
    None
}
