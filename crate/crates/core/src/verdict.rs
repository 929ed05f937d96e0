//! Sign expectations for derivative traces and spectral shift densities.

use serde::Serialize;

use crate::spectral::SymmetricOperator;

/// Sign class of a perturbation `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSign {
    Psd,
    Nsd,
    Indefinite,
}

impl PerturbationSign {
    /// Classifies `v` with eigenvalue tolerance `1e-12 · max(1, ‖V‖)`.
    pub fn classify(v: &SymmetricOperator) -> Self {
        let tol = 1e-12 * v.operator_norm().max(1.0);
        if v.is_psd(tol) {
            PerturbationSign::Psd
        } else if v.is_nsd(tol) {
            PerturbationSign::Nsd
        } else {
            PerturbationSign::Indefinite
        }
    }
}

/// What the positivity theorems predict for an order-n quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Nonneg,
    Nonpos,
    NoClaim,
}

impl Expectation {
    /// Even orders are nonnegative; odd orders follow the sign of `V`.
    pub fn for_order(n: usize, v: PerturbationSign) -> Self {
        match (n % 2 == 0, v) {
            (true, _) => Expectation::Nonneg,
            (false, PerturbationSign::Psd) => Expectation::Nonneg,
            (false, PerturbationSign::Nsd) => Expectation::Nonpos,
            (false, PerturbationSign::Indefinite) => Expectation::NoClaim,
        }
    }

    fn orientation(self) -> f64 {
        match self {
            Expectation::Nonpos => -1.0,
            _ => 1.0,
        }
    }
}

/// Observed sign pattern of a sampled quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedSign {
    Nonneg,
    Nonpos,
    Indefinite,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SignVerdict {
    pub expectation: Expectation,
    pub observed: ObservedSign,
    /// Worst value in the expected orientation divided by `max |values|`
    /// (for [`Expectation::NoClaim`], the nonnegative orientation).
    pub margin: f64,
    pub max_abs: f64,
    pub tol: f64,
    /// True when the expectation holds, or when no claim is made.
    pub pass: bool,
}

/// Judges `values` with absolute tolerance `rel_tol · max|values|`, floored
/// at `1e-12`.
pub fn judge(values: &[f64], expectation: Expectation, rel_tol: f64) -> SignVerdict {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (rel_tol * max_abs).max(1e-12);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let observed = if lo >= -tol {
        ObservedSign::Nonneg
    } else if hi <= tol {
        ObservedSign::Nonpos
    } else {
        ObservedSign::Indefinite
    };
    let sign = expectation.orientation();
    let worst = values.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min);
    let margin = if max_abs > 0.0 { worst / max_abs } else { 0.0 };
    let pass = match expectation {
        Expectation::NoClaim => true,
        _ => worst >= -tol,
    };
    SignVerdict {
        expectation,
        observed,
        margin,
        max_abs,
        tol,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectation_table() {
        use Expectation::*;
        use PerturbationSign::*;
        assert_eq!(Expectation::for_order(2, Indefinite), Nonneg);
        assert_eq!(Expectation::for_order(3, Psd), Nonneg);
        assert_eq!(Expectation::for_order(3, Nsd), Nonpos);
        assert_eq!(Expectation::for_order(3, Indefinite), NoClaim);
    }

    #[test]
    fn classify_perturbations() {
        assert_eq!(PerturbationSign::classify(&SymmetricOperator::diagonal(&[0.0, 1.0])), PerturbationSign::Psd);
        assert_eq!(PerturbationSign::classify(&SymmetricOperator::diagonal(&[-1.0, 0.0])), PerturbationSign::Nsd);
        assert_eq!(
            PerturbationSign::classify(&SymmetricOperator::diagonal(&[-1.0, 1.0])),
            PerturbationSign::Indefinite
        );
    }

    #[test]
    fn judge_uses_relative_tolerance() {
        let v = judge(&[1.0, 0.5, -1e-10], Expectation::Nonneg, 1e-8);
        assert!(v.pass);
        assert_eq!(v.observed, ObservedSign::Nonneg);
        let v = judge(&[1.0, -1e-3], Expectation::Nonneg, 1e-8);
        assert!(!v.pass);
        assert_close!(v.margin, -1e-3, 1e-15);
        let v = judge(&[-2.0, -1.0], Expectation::Nonpos, 1e-8);
        assert!(v.pass);
        assert_close!(v.margin, 0.5, 1e-15);
    }
}
