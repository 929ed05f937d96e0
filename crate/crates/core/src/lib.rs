//! Operator calculus on finite real symmetric matrices.
//!
//! The crate evaluates multilinear operator integrals exactly in finite
//! dimension and builds on them: higher-order derivatives of `t ↦ f(H + tV)`,
//! operator Taylor remainders in three independent representations, spectral
//! shift functions of arbitrary order, complete-monotonicity tests and
//! Bernstein / Laplace-measure recovery by nonnegative least squares, and
//! finite truncation models of semi-bounded operators.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }};
}

pub mod error;
pub mod functions;
pub mod instance;
pub mod io;
pub mod bmv;
pub mod cli;
pub mod derivatives;
pub mod moi;
pub mod nnls;
pub mod spectral;
pub mod ssf;
pub mod truncation;
pub mod verdict;

#[cfg(test)]
pub(crate) mod testing;

pub use error::{OslabError, Result};
pub use functions::{builtin, FunctionSpec, SmoothFunction};
pub use spectral::{Interval, SymmetricOperator};
