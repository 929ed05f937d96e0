//! Confluent divided differences.
//!
//! Nodes are sorted and chains of nodes closer than the cluster tolerance are
//! snapped to their mean. The Newton table is then built bottom-up: coincident
//! ranges take the derivative branch `f^(r)(x)/r!`, short ranges around which
//! the function is analytic use a Taylor expansion in complete homogeneous
//! polynomials, and everything else uses the difference quotient.

use std::collections::HashMap;

use super::{factorial, SmoothFunction};
use crate::error::{OslabError, Result};
use crate::spectral::CLUSTER_TOL;

/// Ranges shorter than this (relative to the node magnitude) are expanded in
/// a Taylor series instead of differenced, when the symbol allows it.
const SHORT_SPAN: f64 = 1e-2;
const TAYLOR_TERMS: usize = 40;

pub fn default_cluster_tolerance(nodes: &[f64]) -> f64 {
    let scale = nodes.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    CLUSTER_TOL * scale
}

/// `f^[n](x_0, ..., x_n)` with `n = nodes.len() - 1`.
pub fn divided_difference(f: &dyn SmoothFunction, nodes: &[f64]) -> Result<f64> {
    divided_difference_with(f, nodes, default_cluster_tolerance(nodes))
}

pub fn divided_difference_with(
    f: &dyn SmoothFunction,
    nodes: &[f64],
    cluster_tol: f64,
) -> Result<f64> {
    if nodes.is_empty() {
        return Err(OslabError::InvalidParameter(
            "divided difference needs at least one node".into(),
        ));
    }
    let order = nodes.len() - 1;
    if order > f.max_order() {
        return Err(OslabError::OrderTooHigh {
            function: f.name().to_string(),
            max_order: f.max_order(),
            requested: order,
        });
    }
    let domain = f.domain();
    if let Some(&bad) = nodes.iter().find(|&&x| !domain.contains(x)) {
        return Err(OslabError::OutsideDomain {
            function: f.name().to_string(),
            eigenvalue: bad,
            domain: domain.to_string(),
        });
    }
    let mut scratch = Scratch::default();
    Ok(scratch.evaluate(f, nodes, cluster_tol))
}

/// `h_degree(vars)`, the sum of all monomials of the given degree.
pub fn complete_homogeneous(vars: &[f64], degree: usize) -> f64 {
    let mut h = vec![0.0; degree + 1];
    h[0] = 1.0;
    for &y in vars {
        for k in 1..=degree {
            h[k] += y * h[k - 1];
        }
    }
    h[degree]
}

#[derive(Debug, Default)]
struct Scratch {
    raw: Vec<f64>,
    snapped: Vec<f64>,
    table: Vec<f64>,
    homogeneous: Vec<f64>,
}

impl Scratch {
    fn prepare(&mut self, nodes: &[f64], tol: f64) {
        self.raw.clear();
        self.raw.extend_from_slice(nodes);
        self.raw.sort_by(f64::total_cmp);
        self.snapped.clear();
        self.snapped.extend_from_slice(&self.raw);
        let n = self.raw.len();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && self.raw[end] - self.raw[end - 1] <= tol {
                end += 1;
            }
            if end - start > 1 {
                let mean = self.raw[start..end].iter().sum::<f64>() / (end - start) as f64;
                self.snapped[start..end].fill(mean);
            }
            start = end;
        }
    }

    fn evaluate(&mut self, f: &dyn SmoothFunction, nodes: &[f64], tol: f64) -> f64 {
        self.prepare(nodes, tol);
        if let Some(exact) = f.exact_divided_difference(&self.raw) {
            return exact;
        }
        let x = std::mem::take(&mut self.snapped);
        let n = x.len() - 1;
        if x[0] == x[n] {
            let value = f.eval(x[0], n) / factorial(n);
            self.snapped = x;
            return value;
        }
        self.table.clear();
        self.table.extend(x.iter().map(|&xi| f.eval(xi, 0)));
        for r in 1..=n {
            for i in 0..=(n - r) {
                let (a, b) = (x[i], x[i + r]);
                self.table[i] = if a == b {
                    f.eval(a, r) / factorial(r)
                } else if let Some(v) = self.taylor(f, &x[i..=i + r]) {
                    v
                } else {
                    (self.table[i + 1] - self.table[i]) / (b - a)
                };
            }
        }
        let value = self.table[0];
        self.snapped = x;
        value
    }

    /// Taylor expansion about the midpoint, if the range is short and the
    /// symbol is analytic well beyond it.
    fn taylor(&mut self, f: &dyn SmoothFunction, x: &[f64]) -> Option<f64> {
        let m = x.len() - 1;
        let (a, b) = (x[0], x[m]);
        let scale = a.abs().max(b.abs()).max(1.0);
        if b - a >= SHORT_SPAN * scale || f.max_order() < m + TAYLOR_TERMS {
            return None;
        }
        let c = 0.5 * (a + b);
        let radius = f.analytic_radius(c)?;
        if 0.5 * (b - a) > 0.25 * radius {
            return None;
        }
        let h = &mut self.homogeneous;
        h.clear();
        h.resize(TAYLOR_TERMS + 1, 0.0);
        h[0] = 1.0;
        for &xi in x {
            let y = xi - c;
            for k in 1..=TAYLOR_TERMS {
                h[k] += y * h[k - 1];
            }
        }
        let mut sum = 0.0;
        let mut quiet = 0;
        let mut fact = factorial(m);
        for k in 0..=TAYLOR_TERMS {
            if k > 0 {
                fact *= (m + k) as f64;
            }
            let term = f.eval(c, m + k) / fact * h[k];
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        Some(sum)
    }
}

/// Divided-difference memo keyed by the sorted, clustered node tuple.
///
/// Owned by a single evaluation; eigenvalue multiplicities and the symmetry
/// of `f^[n]` make the tensor highly redundant.
#[derive(Debug)]
pub struct DividedDifferenceCache<'f> {
    f: &'f dyn SmoothFunction,
    tol: f64,
    memo: HashMap<Vec<u64>, f64>,
    scratch: Scratch,
    key: Vec<u64>,
}

impl<'f> DividedDifferenceCache<'f> {
    /// Nodes must already lie in the domain and `order <= f.max_order()`.
    pub fn new(f: &'f dyn SmoothFunction, cluster_tol: f64) -> Self {
        Self {
            f,
            tol: cluster_tol,
            memo: HashMap::new(),
            scratch: Scratch::default(),
            key: Vec::new(),
        }
    }

    pub fn get(&mut self, nodes: &[f64]) -> f64 {
        self.scratch.prepare(nodes, self.tol);
        self.key.clear();
        self.key.extend(self.scratch.snapped.iter().map(|x| x.to_bits()));
        if let Some(&v) = self.memo.get(&self.key) {
            return v;
        }
        let value = self.scratch.evaluate(self.f, nodes, self.tol);
        self.memo.insert(self.key.clone(), value);
        value
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}
