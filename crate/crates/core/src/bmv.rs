//! Complete monotonicity checks and Bernstein / Laplace measure recovery.
//!
//! A completely monotone function `g` has `(−1)^k g^(k) >= 0` for all k. Three
//! independent tests are run on a candidate: signed derivatives, alternating
//! finite differences on a uniform grid, and positivity of the Hankel
//! matrices of uniform samples (which are Hausdorff moment sequences in the
//! variable `e^{−δs}`).
//!
//! Measures are recovered as finitely many atoms by nonnegative least squares
//! over a log-spaced dictionary, after which adjacent atoms are merged and the
//! merged atoms are polished by Levenberg–Marquardt.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::derivatives::derivative_trace;
use crate::error::{OslabError, Result};
use crate::functions::{factorial, NegExpDecay, ResolventPower, SmoothFunction};
use crate::io::fmt_f64;
use crate::moi::{moi_trace, MoiProblem};
use crate::nnls::nnls;
use crate::spectral::{linspace, SymmetricOperator};
use crate::verdict::PerturbationSign;

/// Relative tolerance of the derivative and difference sign tests.
pub const CM_TOL: f64 = 1e-8;
/// Hankel matrices may have minimal eigenvalue down to `−HANKEL_TOL · ‖H‖`.
pub const HANKEL_TOL: f64 = 1e-8;
/// Atoms lighter than this fraction of the total weight are dropped.
pub const PRUNE_FRACTION: f64 = 1e-10;
/// Dictionary atoms this many indices apart or closer form one cluster.
const RUN_GAP: usize = 3;
/// Polished atoms closer than this in `ln s` are combined.
const COINCIDENT: f64 = 1e-3;

/// A function of `t` with derivatives, tested for complete monotonicity.
pub trait CmCandidate: Sync {
    fn value(&self, t: f64) -> Result<f64>;

    /// `d^k/dt^k` of the candidate; `k = 0` is the value.
    fn derivative(&self, t: f64, k: usize) -> Result<f64>;
}

/// Closed-form candidate from a derivative evaluator.
pub struct ClosedForm<F: Fn(f64, usize) -> f64 + Sync>(pub F);

impl<F: Fn(f64, usize) -> f64 + Sync> CmCandidate for ClosedForm<F> {
    fn value(&self, t: f64) -> Result<f64> {
        Ok((self.0)(t, 0))
    }

    fn derivative(&self, t: f64, k: usize) -> Result<f64> {
        Ok((self.0)(t, k))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CmOptions {
    /// Highest derivative / difference order tested.
    pub max_order: usize,
    /// Points of the grid (evenly subsampled) used by the derivative test.
    pub sign_points: usize,
    /// Points of the uniform grid used by the difference test.
    pub diff_points: usize,
    /// Hankel matrices are `(size × size)`.
    pub hankel_size: usize,
}

impl Default for CmOptions {
    fn default() -> Self {
        Self {
            max_order: 4,
            sign_points: 16,
            diff_points: 32,
            hankel_size: 5,
        }
    }
}

/// Minimum of a signed table row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderMin {
    pub order: usize,
    /// `min (−1)^k x` over the row.
    pub min_signed: f64,
    pub max_abs: f64,
    pub tol: f64,
    pub pass: bool,
}

fn order_min(order: usize, row: &[f64]) -> OrderMin {
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    let max_abs = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let min_signed = row.iter().map(|x| sign * x).fold(f64::INFINITY, f64::min);
    let tol = (CM_TOL * max_abs).max(1e-12);
    OrderMin {
        order,
        min_signed,
        max_abs,
        tol,
        pass: min_signed >= -tol,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CmReport {
    pub t_grid: Vec<f64>,
    pub samples: Vec<f64>,
    pub derivative_sign_table: Vec<OrderMin>,
    pub diff_table: Vec<OrderMin>,
    /// Minimal eigenvalues of `[c_{i+j}]` and `[c_{i+j} − c_{i+j+1}]`.
    pub hankel_size: usize,
    pub hankel_min_eigs: [f64; 2],
    pub hankel_norms: [f64; 2],
    pub derivatives_pass: bool,
    pub differences_pass: bool,
    pub hankel_pass: bool,
    pub verdict: bool,
}

impl CmReport {
    /// CSV of per-order minima: `test, order, min_signed, max_abs, tol, pass`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["test", "order", "min_signed", "max_abs", "tol", "pass"])?;
        let rows = self
            .derivative_sign_table
            .iter()
            .map(|r| ("derivative", r))
            .chain(self.diff_table.iter().map(|r| ("difference", r)));
        for (test, r) in rows {
            writer.write_record([
                test.to_string(),
                r.order.to_string(),
                fmt_f64(r.min_signed),
                fmt_f64(r.max_abs),
                fmt_f64(r.tol),
                r.pass.to_string(),
            ])?;
        }
        for (i, name) in ["hankel", "hankel_shifted"].iter().enumerate() {
            writer.write_record([
                name.to_string(),
                self.hankel_size.to_string(),
                fmt_f64(self.hankel_min_eigs[i]),
                fmt_f64(self.hankel_norms[i]),
                fmt_f64(HANKEL_TOL * self.hankel_norms[i]),
                (self.hankel_min_eigs[i] >= -HANKEL_TOL * self.hankel_norms[i]).to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn subsample(grid: &[f64], count: usize) -> Vec<f64> {
    if grid.len() <= count {
        return grid.to_vec();
    }
    (0..count)
        .map(|i| grid[i * (grid.len() - 1) / (count - 1)])
        .collect()
}

/// Runs the three complete-monotonicity tests on `[min t, max t]` of `t_grid`.
pub fn cm_check(candidate: &dyn CmCandidate, options: CmOptions, t_grid: &[f64]) -> Result<CmReport> {
    if options.max_order < 2 || options.hankel_size < 2 || options.diff_points < options.max_order + 1 {
        return Err(OslabError::InvalidParameter(format!(
            "complete monotonicity checks need K >= 2, Hankel size >= 2 and more difference points than K, got {options:?}"
        )));
    }
    if t_grid.len() < 2 {
        return Err(OslabError::InvalidParameter("t-grid needs at least two points".into()));
    }
    let lo = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let samples = t_grid
        .par_iter()
        .map(|&t| candidate.value(t))
        .collect::<Result<Vec<_>>>()?;

    // (a) signed derivatives
    let sign_grid = subsample(t_grid, options.sign_points);
    let derivative_sign_table = (0..=options.max_order)
        .map(|k| {
            let row = sign_grid
                .par_iter()
                .map(|&t| candidate.derivative(t, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(order_min(k, &row))
        })
        .collect::<Result<Vec<_>>>()?;

    // (b) alternating differences on a uniform grid
    let uniform = linspace(lo, hi, options.diff_points);
    let mut row = uniform
        .par_iter()
        .map(|&t| candidate.value(t))
        .collect::<Result<Vec<_>>>()?;
    let mut diff_table = vec![order_min(0, &row)];
    for k in 1..=options.max_order {
        row = row.windows(2).map(|w| w[1] - w[0]).collect();
        diff_table.push(order_min(k, &row));
    }

    // (c) Hankel moment matrices from uniform samples
    let size = options.hankel_size;
    let moments = linspace(lo, hi, 2 * size)
        .par_iter()
        .map(|&t| candidate.value(t))
        .collect::<Result<Vec<_>>>()?;
    let plain = DMatrix::from_fn(size, size, |i, j| moments[i + j]);
    let shifted = DMatrix::from_fn(size, size, |i, j| moments[i + j] - moments[i + j + 1]);
    let (min0, norm0) = min_eig_and_norm(plain);
    let (min1, norm1) = min_eig_and_norm(shifted);

    let derivatives_pass = derivative_sign_table.iter().all(|r| r.pass);
    let differences_pass = diff_table.iter().all(|r| r.pass);
    let hankel_pass = min0 >= -HANKEL_TOL * norm0 && min1 >= -HANKEL_TOL * norm1;
    Ok(CmReport {
        t_grid: t_grid.to_vec(),
        samples,
        derivative_sign_table,
        diff_table,
        hankel_size: size,
        hankel_min_eigs: [min0, min1],
        hankel_norms: [norm0, norm1],
        derivatives_pass,
        differences_pass,
        hankel_pass,
        verdict: derivatives_pass && differences_pass && hankel_pass,
    })
}

fn min_eig_and_norm(a: DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a);
    let min = eig.eigenvalues.min();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (min, norm)
}

/// Form of the forward map of a [`BernsteinPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `b t + sign Σ w_j (1 − e^{−t s_j})`
    Bernstein,
    /// `sign Σ w_j e^{−t s_j}`
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub s: f64,
    pub w: f64,
}

/// Drift plus a finite positive measure.
#[derive(Debug, Clone, Serialize)]
pub struct BernsteinPair {
    pub kind: PairKind,
    pub b: f64,
    pub sign: f64,
    /// Strictly increasing locations, nonnegative weights.
    pub atoms: Vec<Atom>,
}

impl BernsteinPair {
    pub fn value(&self, t: f64) -> f64 {
        let sum: f64 = self.atoms.iter().map(|a| a.w * kernel(self.kind, t, a.s)).sum();
        self.b * t + self.sign * sum
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// The pair representing the negated function.
    pub fn negated(&self) -> BernsteinPair {
        BernsteinPair {
            kind: self.kind,
            b: -self.b,
            sign: -self.sign,
            atoms: self.atoms.clone(),
        }
    }
}

fn kernel(kind: PairKind, t: f64, s: f64) -> f64 {
    match kind {
        PairKind::Bernstein => -(-t * s).exp_m1(),
        PairKind::Laplace => (-t * s).exp(),
    }
}

/// `d/du kernel(t, e^u)` at `s = e^u`.
fn kernel_log_derivative(kind: PairKind, t: f64, s: f64) -> f64 {
    match kind {
        PairKind::Bernstein => t * s * (-t * s).exp(),
        PairKind::Laplace => -t * s * (-t * s).exp(),
    }
}

/// Log-spaced atom locations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DictionarySpec {
    pub per_decade: usize,
    /// Defaults to `0.5 / t_max`.
    pub s_min: Option<f64>,
    /// Defaults to `2 / t_min`.
    pub s_max: Option<f64>,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            per_decade: 200,
            s_min: None,
            s_max: None,
        }
    }
}

impl DictionarySpec {
    pub fn locations(&self, t_grid: &[f64]) -> Result<Vec<f64>> {
        let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(t_min > 0.0) || self.per_decade == 0 {
            return Err(OslabError::InvalidParameter(format!(
                "dictionaries need a positive t-grid and per_decade >= 1, got t_min={t_min}"
            )));
        }
        let lo = self.s_min.unwrap_or(0.5 / t_max);
        let hi = self.s_max.unwrap_or(2.0 / t_min);
        if !(lo > 0.0 && hi > lo) {
            return Err(OslabError::InvalidParameter(format!(
                "dictionary range must satisfy 0 < s_min < s_max, got [{lo}, {hi}]"
            )));
        }
        let decades = (hi / lo).log10();
        let count = (decades * self.per_decade as f64).ceil() as usize + 1;
        Ok(linspace(lo.log10(), hi.log10(), count)
            .into_iter()
            .map(|e| 10f64.powf(e))
            .collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub pair: BernsteinPair,
    /// `‖samples − model‖₂ / ‖samples‖₂` for the returned pair.
    pub residual_rel: f64,
    /// The same for the unmerged dictionary solution.
    pub raw_residual_rel: f64,
    /// Whether the returned atoms are merged-and-polished clusters.
    pub clustered: bool,
    pub t_grid: Vec<f64>,
    pub dictionary: DictionarySpec,
    pub dictionary_size: usize,
}

impl FitReport {
    /// `{"b", "sign", "atoms": [{"s", "w"}], "residual_rel", "grid": {...}}`
    pub fn to_json(&self) -> serde_json::Value {
        let atoms: Vec<_> = self
            .pair
            .atoms
            .iter()
            .map(|a| json!({"s": fmt_f64(a.s), "w": fmt_f64(a.w)}))
            .collect();
        let t_min = self.t_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = self.t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        json!({
            "kind": self.pair.kind,
            "b": fmt_f64(self.pair.b),
            "sign": self.pair.sign as i32,
            "atoms": atoms,
            "residual_rel": fmt_f64(self.residual_rel),
            "grid": {
                "t_min": fmt_f64(t_min),
                "t_max": fmt_f64(t_max),
                "count": self.t_grid.len(),
                "per_decade": self.dictionary.per_decade,
                "dictionary_size": self.dictionary_size,
            },
        })
    }
}

/// Fits `samples ≈ b t + Σ w_j (1 − e^{−t s_j})` with `b, w >= 0`.
pub fn bernstein_fit(t_grid: &[f64], samples: &[f64], dictionary: DictionarySpec) -> Result<FitReport> {
    fit(PairKind::Bernstein, t_grid, samples, 1.0, dictionary)
}

/// Fits `sign · samples ≈ Σ w_j e^{−t s_j}` with `w >= 0` and a constant
/// (`s = 0`) column.
pub fn cm_fit(t_grid: &[f64], samples: &[f64], sign: f64, dictionary: DictionarySpec) -> Result<FitReport> {
    if sign != 1.0 && sign != -1.0 {
        return Err(OslabError::InvalidParameter(format!("sign must be ±1, got {sign}")));
    }
    fit(PairKind::Laplace, t_grid, samples, sign, dictionary)
}

fn fit(kind: PairKind, t_grid: &[f64], samples: &[f64], sign: f64, dictionary: DictionarySpec) -> Result<FitReport> {
    if t_grid.len() != samples.len() || t_grid.is_empty() {
        return Err(OslabError::InvalidParameter(format!(
            "{} grid points but {} samples",
            t_grid.len(),
            samples.len()
        )));
    }
    let mut locations = dictionary.locations(t_grid)?;
    if kind == PairKind::Laplace {
        locations.insert(0, 0.0);
    }
    let drift = kind == PairKind::Bernstein;
    let offset = usize::from(drift);
    let m = t_grid.len();
    let columns = locations.len() + offset;
    let a = DMatrix::from_fn(m, columns, |i, j| {
        if drift && j == 0 {
            t_grid[i]
        } else {
            kernel(kind, t_grid[i], locations[j - offset])
        }
    });
    let y = DVector::from_iterator(m, samples.iter().map(|x| sign * x));
    let scale = y.norm();
    let solution = nnls(&a, &y)?;
    let b = if drift { solution.x[0] } else { 0.0 };
    let raw: Vec<(usize, Atom)> = locations
        .iter()
        .enumerate()
        .map(|(j, &s)| (j, Atom { s, w: solution.x[j + offset] }))
        .filter(|(_, a)| a.w > 0.0)
        .collect();
    let total: f64 = raw.iter().map(|(_, a)| a.w).sum();
    let raw: Vec<(usize, Atom)> = raw.into_iter().filter(|(_, a)| a.w >= PRUNE_FRACTION * total).collect();

    let rel = |b: f64, atoms: &[Atom]| -> f64 {
        let residual: f64 = t_grid
            .iter()
            .zip(y.iter())
            .map(|(&t, &yi)| {
                let model = b * t + atoms.iter().map(|a| a.w * kernel(kind, t, a.s)).sum::<f64>();
                (yi - model).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if scale > 0.0 {
            residual / scale
        } else {
            residual
        }
    };
    let raw_atoms: Vec<Atom> = raw.iter().map(|(_, a)| *a).collect();
    let raw_residual = rel(b, &raw_atoms);

    let merged = merge_runs(&raw);
    let (mut pb, mut polished) = polish(kind, t_grid, y.as_slice(), drift.then_some(b), merged);
    loop {
        let before = polished.len();
        polished = coalesce(polished);
        if polished.len() == before {
            break;
        }
        (pb, polished) = polish(kind, t_grid, y.as_slice(), drift.then_some(pb), polished);
    }
    let polished_residual = rel(pb, &polished);
    let (b, atoms, residual, clustered) = if polished_residual <= raw_residual.max(1e-14) {
        (pb, polished, polished_residual, true)
    } else {
        (b, raw_atoms, raw_residual, false)
    };
    Ok(FitReport {
        pair: BernsteinPair {
            kind,
            b,
            sign,
            atoms,
        },
        residual_rel: residual,
        raw_residual_rel: raw_residual,
        clustered,
        t_grid: t_grid.to_vec(),
        dictionary,
        dictionary_size: locations.len(),
    })
}

/// Merges atoms at most `RUN_GAP` dictionary indices apart into one atom at
/// the weighted geometric mean location. The `s = 0` atom is never merged.
fn merge_runs(atoms: &[(usize, Atom)]) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::new();
    let mut run: Vec<Atom> = Vec::new();
    let mut last_index = None;
    let flush = |run: &mut Vec<Atom>, out: &mut Vec<Atom>| {
        if run.is_empty() {
            return;
        }
        let w: f64 = run.iter().map(|a| a.w).sum();
        let s = if run[0].s == 0.0 {
            0.0
        } else {
            (run.iter().map(|a| a.w * a.s.ln()).sum::<f64>() / w).exp()
        };
        out.push(Atom { s, w });
        run.clear();
    };
    for &(j, atom) in atoms {
        let adjacent = last_index.is_some_and(|i: usize| j <= i + RUN_GAP);
        if !adjacent || atom.s == 0.0 || run.first().is_some_and(|a| a.s == 0.0) {
            flush(&mut run, &mut out);
        }
        run.push(atom);
        last_index = Some(j);
    }
    flush(&mut run, &mut out);
    out
}

/// Combines sorted atoms whose locations agree to `COINCIDENT` relative.
fn coalesce(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.s > 0.0 && (a.s / last.s).ln().abs() < COINCIDENT => {
                let w = last.w + a.w;
                if w > 0.0 {
                    last.s = ((last.w * last.s.ln() + a.w * a.s.ln()) / w).exp();
                }
                last.w = w;
            }
            _ => out.push(a),
        }
    }
    out
}

/// Levenberg–Marquardt on `(b, log s_j, w_j)`, rejecting steps that lose
/// nonnegativity or increase the residual.
fn polish(kind: PairKind, t: &[f64], y: &[f64], drift: Option<f64>, atoms: Vec<Atom>) -> (f64, Vec<Atom>) {
    let free_drift = drift.is_some_and(|b| b > 0.0);
    let b0 = drift.unwrap_or(0.0);
    // parameter layout: [b?] then per atom [u_j (if s_j > 0), w_j]
    let pack = |b: f64, atoms: &[Atom]| -> Vec<f64> {
        let mut p = Vec::new();
        if free_drift {
            p.push(b);
        }
        for a in atoms {
            if a.s > 0.0 {
                p.push(a.s.ln());
            }
            p.push(a.w);
        }
        p
    };
    let unpack = |p: &[f64]| -> (f64, Vec<Atom>) {
        let mut i = 0;
        let b = if free_drift {
            i = 1;
            p[0]
        } else {
            b0
        };
        let mut out = Vec::with_capacity(atoms.len());
        for a in &atoms {
            let s = if a.s > 0.0 {
                i += 1;
                p[i - 1].exp()
            } else {
                0.0
            };
            out.push(Atom { s, w: p[i] });
            i += 1;
        }
        (b, out)
    };
    let residuals = |b: f64, atoms: &[Atom]| -> DVector<f64> {
        DVector::from_iterator(
            t.len(),
            t.iter().zip(y).map(|(&ti, &yi)| {
                yi - b * ti - atoms.iter().map(|a| a.w * kernel(kind, ti, a.s)).sum::<f64>()
            }),
        )
    };
    let feasible = |b: f64, atoms: &[Atom]| b >= 0.0 && atoms.iter().all(|a| a.w >= 0.0 && a.s.is_finite());

    let mut p = pack(b0, &atoms);
    if p.is_empty() {
        return (b0, atoms);
    }
    let (mut b, mut current) = unpack(&p);
    let mut r = residuals(b, &current);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..200 {
        let jac = DMatrix::from_fn(t.len(), p.len(), |i, j| {
            let mut col = 0;
            if free_drift {
                if j == 0 {
                    return t[i];
                }
                col = 1;
            }
            for a in &current {
                if a.s > 0.0 {
                    if j == col {
                        return a.w * kernel_log_derivative(kind, t[i], a.s);
                    }
                    col += 1;
                }
                if j == col {
                    return kernel(kind, t[i], a.s);
                }
                col += 1;
            }
            unreachable!("column {j} beyond the parameter vector")
        });
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&r);
        let mut improved = false;
        while mu < 1e12 {
            let mut damped = jtj.clone();
            for d in 0..p.len() {
                damped[(d, d)] += mu * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let (tb, tatoms) = unpack(&trial);
            if feasible(tb, &tatoms) {
                let tr = residuals(tb, &tatoms);
                let tcost = tr.norm_squared();
                if tcost < cost {
                    let gain = (cost - tcost) / cost.max(f64::MIN_POSITIVE);
                    p = trial;
                    b = tb;
                    current = tatoms;
                    r = tr;
                    cost = tcost;
                    mu = (mu / 3.0).max(1e-12);
                    improved = gain > 1e-14;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    current.sort_by(|x, y| x.s.total_cmp(&y.s));
    (b, current)
}

/// `φ(t) = Tr(f(H + tV) − f(H))`, each sample computed as the trace of the
/// first-order integral `T^{H+tV, H}_{f^[1]}(tV)`.
pub fn phi_samples(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    h.check_dim(v)?;
    t_grid
        .par_iter()
        .map(|&t| {
            let ht = h.add_scaled(v, t)?;
            ht.check_in_domain(f).map_err(|e| OslabError::DomainViolation {
                t,
                reason: e.to_string(),
            })?;
            let tv = v.matrix() * t;
            Ok(moi_trace(&MoiProblem::new(vec![&ht, h], vec![&tv], f)?))
        })
        .collect()
}

/// `sign · Tr d^n/dτ^n f(H + τV)|_{τ=t}`, whose k-th derivative is the
/// order-`(n+k)` derivative trace.
pub struct DerivativeTrace<'a> {
    pub f: &'a dyn SmoothFunction,
    pub h: &'a SymmetricOperator,
    pub v: &'a SymmetricOperator,
    pub n: usize,
    pub sign: f64,
}

impl CmCandidate for DerivativeTrace<'_> {
    fn value(&self, t: f64) -> Result<f64> {
        self.derivative(t, 0)
    }

    fn derivative(&self, t: f64, k: usize) -> Result<f64> {
        Ok(self.sign * trace_derivative(self.f, self.h, self.v, self.n + k, t)?)
    }
}

/// `d^m/dt^m Tr f(H + tV)`, including `m = 0`.
fn trace_derivative(f: &dyn SmoothFunction, h: &SymmetricOperator, v: &SymmetricOperator, m: usize, t: f64) -> Result<f64> {
    if m == 0 {
        h.add_scaled(v, t)?.trace_of(f)
    } else {
        derivative_trace(f, h, v, m, t)
    }
}

/// `sign · Tr R_n(f, H + tV, V)`. With `F(t) = Tr f(H + tV)` this is
/// `F(t + 1) − Σ_{j<n} F^(j)(t)/j!`, differentiated term by term.
pub struct TimeRemainder<'a> {
    pub f: &'a dyn SmoothFunction,
    pub h: &'a SymmetricOperator,
    pub v: &'a SymmetricOperator,
    pub n: usize,
    pub sign: f64,
}

impl CmCandidate for TimeRemainder<'_> {
    fn value(&self, t: f64) -> Result<f64> {
        self.derivative(t, 0)
    }

    fn derivative(&self, t: f64, k: usize) -> Result<f64> {
        let mut total = trace_derivative(self.f, self.h, self.v, k, t + 1.0)?;
        for j in 0..self.n {
            total -= trace_derivative(self.f, self.h, self.v, j + k, t)? / factorial(j);
        }
        Ok(self.sign * total)
    }
}

/// `count` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = linspace(lo.ln(), hi.ln(), count).into_iter().map(f64::exp).collect();
    if let Some(first) = grid.first_mut() {
        *first = lo;
    }
    if let Some(last) = grid.last_mut() {
        *last = hi;
    }
    grid
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatResolvent {
    /// `Tr(e^{−H−tV} − e^{−H}) = b₁ t + ∫ (e^{−ts} − 1) dμ`, `b₁ <= 0`.
    pub heat: FitReport,
    /// `Tr((H+tV−λ)^{−r} − (H−λ)^{−r}) = b₂ t + ∫ (e^{−ts} − 1) dν`, `b₂ <= 0`.
    pub resolvent: FitReport,
}

/// Fits the heat and resolvent trace functions of a PSD perturbation. The
/// Bernstein functions `φ` for `−e^{−x}` and `−(x−λ)^{−r}` are fitted and the
/// pairs are returned negated, in the `b <= 0`, `sign = −1` convention.
pub fn heat_and_resolvent_cases(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    t_grid: &[f64],
    lambda: f64,
    r: f64,
    dictionary: DictionarySpec,
) -> Result<HeatResolvent> {
    if lambda >= h.min_eigenvalue() {
        return Err(OslabError::InvalidParameter(format!(
            "λ = {lambda} must lie below the spectrum of H (λ_min = {})",
            h.min_eigenvalue()
        )));
    }
    if PerturbationSign::classify(v) != PerturbationSign::Psd {
        return Err(OslabError::InvalidParameter("the heat and resolvent representations need V >= 0".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t < 0.0) {
        return Err(OslabError::DomainViolation {
            t,
            reason: "representations hold for t >= 0".into(),
        });
    }
    let negate = |mut report: FitReport| {
        report.pair = report.pair.negated();
        report
    };
    let heat = phi_samples(&NegExpDecay, h, v, t_grid)?;
    let resolvent_fn = ResolventPower::new(r, lambda)?;
    let resolvent = phi_samples(&resolvent_fn, h, v, t_grid)?;
    Ok(HeatResolvent {
        heat: negate(bernstein_fit(t_grid, &heat, dictionary)?),
        resolvent: negate(bernstein_fit(t_grid, &resolvent, dictionary)?),
    })
}

/// Samples `t ↦ Tr R_n(f, H + tV, V)`, checks that `(−1)^(n−1)` times it is
/// completely monotone, and fits its Laplace measure.
pub fn remainder_laplace_check(
    f: &dyn SmoothFunction,
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    n: usize,
    t_grid: &[f64],
    options: CmOptions,
    dictionary: DictionarySpec,
) -> Result<(CmReport, FitReport)> {
    if n == 0 {
        return Err(OslabError::InvalidParameter("remainder order must be at least 1".into()));
    }
    h.check_dim(v)?;
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    let candidate = TimeRemainder { f, h, v, n, sign };
    let report = cm_check(&candidate, options, t_grid)?;
    let samples: Vec<f64> = report.samples.iter().map(|x| sign * x).collect();
    let fit = cm_fit(t_grid, &samples, sign, dictionary)?;
    Ok((report, fit))
}
