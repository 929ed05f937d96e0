//! Scalar test functions with closed-form derivatives.
//!
//! Every function used as a symbol of an operator integral implements
//! [`SmoothFunction`]. Builtins are registered by name in a
//! [`FunctionRegistry`] and selected at runtime from a [`FunctionSpec`]
//! (`{"name": ..., "params": {...}}`), which is also the grammar of the CLI
//! config files.

mod builtins;
mod divided;
mod signs;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{OslabError, Result};

pub use builtins::{
    Bump, Exponential, Monomial, NegExpDecay, OneMinusExp, Polynomial, ResolventPower,
    ShiftedPower, TruncatedPower,
};
pub use divided::{
    complete_homogeneous, default_cluster_tolerance, divided_difference, divided_difference_with,
    DividedDifferenceCache,
};
pub use signs::{verify_derivative_signs, SignClass, SignReport, SignRow};

/// Where a function (and all its declared derivatives) may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Domain {
    pub const REAL: Domain = Domain {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_open: true,
        hi_open: true,
    };

    /// `(lo, ∞)`
    pub fn above(lo: f64) -> Domain {
        Domain {
            lo,
            hi: f64::INFINITY,
            lo_open: true,
            hi_open: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        let lo_ok = if self.lo_open { x > self.lo } else { x >= self.lo };
        let hi_ok = if self.hi_open { x < self.hi } else { x <= self.hi };
        lo_ok && hi_ok
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_open { '(' } else { '[' };
        let r = if self.hi_open { ')' } else { ']' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// Declared structural properties. Each set flag is backed by derivative
/// sign sampling in the tests; `wiener_extendable` is declarative only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FunctionFlags {
    /// `(-1)^k f^(k) >= 0` for all k.
    pub completely_monotone: bool,
    /// `f'` completely monotone, i.e. `(-1)^(k-1) f^(k) >= 0` for k >= 1.
    pub completely_monotone_derivative: bool,
    /// `f >= 0` with completely monotone derivative.
    pub bernstein: bool,
    pub compact_support: bool,
    pub wiener_extendable: bool,
}

/// A scalar function with derivative evaluators up to [`max_order`].
///
/// [`max_order`]: SmoothFunction::max_order
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn domain(&self) -> Domain;

    /// Highest derivative order `eval` supports.
    fn max_order(&self) -> usize;

    /// `f^(k)(x)`.
    fn eval(&self, x: f64, k: usize) -> f64;

    fn flags(&self) -> FunctionFlags {
        FunctionFlags::default()
    }

    /// Closed-form divided difference over ascending `nodes`, for symbols
    /// where the generic recursion is either inexact or not applicable.
    fn exact_divided_difference(&self, _nodes: &[f64]) -> Option<f64> {
        None
    }

    /// Radius of the disc around `x` on which `f` is analytic, if known.
    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        None
    }
}

/// `{"name": "...", "params": {...}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn required(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| {
            OslabError::InvalidParameter(format!("`{}` requires parameter `{key}`", self.name))
        })
    }
}

pub type BoxedFunction = Box<dyn SmoothFunction>;

type Constructor = fn(&FunctionSpec) -> Result<BoxedFunction>;

/// Name → constructor table for builtin functions.
pub struct FunctionRegistry {
    constructors: HashMap<&'static str, Constructor>,
}

impl FunctionRegistry {
    pub fn empty() -> Self {
        Self {
            constructors: HashMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        builtins::register_all(&mut registry);
        registry
    }

    pub fn register(&mut self, name: &'static str, constructor: Constructor) {
        self.constructors.insert(name, constructor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names: Vec<_> = self.constructors.keys().copied().collect();
        names.sort_unstable();
        names
    }

    pub fn build(&self, spec: &FunctionSpec) -> Result<BoxedFunction> {
        let constructor = self
            .constructors
            .get(spec.name.as_str())
            .ok_or_else(|| OslabError::UnknownFunction(spec.name.clone()))?;
        constructor(spec)
    }
}

/// Builds a builtin from the default registry.
pub fn builtin(spec: &FunctionSpec) -> Result<BoxedFunction> {
    FunctionRegistry::with_builtins().build(spec)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
