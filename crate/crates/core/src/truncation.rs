//! Finite sections of semi-bounded diagonal models and convergence studies.
//!
//! A [`DiagonalModel`] fixes `H = diag(m + i^γ)` and a perturbation with
//! entries decaying like `ρ^{i+j}` on a reference dimension. Truncations take
//! leading blocks in the defining basis, so every `p`-section is a principal
//! submatrix of the reference pair. The largest `p` of a study serves as the
//! reference solution.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivatives::derivative_trace;
use crate::error::{OslabError, Result};
use crate::functions::SmoothFunction;
use crate::io::fmt_f64;
use crate::spectral::{schatten_norm_general, SymmetricOperator};
use crate::ssf::{density_grid, positivity_verdict, ssf_density_on, ssf_hull, ssf_mass, trapezoid, MIN_GRID};
use crate::verdict::{judge, Expectation, PerturbationSign, SignVerdict};

fn default_true() -> bool {
    true
}

/// `λ_i = m + i^γ` (i from 1) and `V` with `|V_ij| <= C ρ^{i+j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalModel {
    pub m: f64,
    pub gamma: f64,
    pub c: f64,
    pub rho: f64,
    /// Assemble `V = AᵀA` from the decaying factor `A` instead of
    /// symmetrizing it.
    #[serde(default = "default_true")]
    pub psd: bool,
    /// Reference dimension; truncations take `p <= size`.
    pub size: usize,
    pub seed: u64,
}

impl DiagonalModel {
    pub fn fixture(size: usize, seed: u64) -> Self {
        Self {
            m: 0.0,
            gamma: 1.0,
            c: 1.0,
            rho: 0.5,
            psd: true,
            size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.m.is_finite()
            && self.gamma > 0.0
            && self.c.is_finite()
            && self.rho > 0.0
            && self.rho < 1.0
            && self.size >= 1;
        if ok {
            Ok(())
        } else {
            Err(OslabError::InvalidParameter(format!(
                "diagonal model needs finite m and C, γ > 0, ρ in (0, 1) and size >= 1, got {self:?}"
            )))
        }
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.m + (i as f64).powf(self.gamma)
    }

    /// Reference pair at dimension `size`.
    pub fn assemble(&self) -> Result<(SymmetricOperator, SymmetricOperator)> {
        self.validate()?;
        let n = self.size;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
        let decay = |i: usize| self.rho.powi(i as i32 + 1);
        let a = DMatrix::from_fn(n, n, |i, j| self.c * decay(i) * decay(j) * raw[(i, j)]);
        let v = if self.psd {
            a.tr_mul(&a)
        } else {
            (&a + a.transpose()) * 0.5
        };
        // AᵀA is symmetric only up to rounding in the accumulation order
        let v = (&v + v.transpose()) * 0.5;
        let diag: Vec<f64> = (1..=n).map(|i| self.eigenvalue(i)).collect();
        Ok((SymmetricOperator::diagonal(&diag), SymmetricOperator::new(v)?))
    }
}

/// Leading `p × p` blocks of the reference pair.
pub fn truncate(model: &DiagonalModel, p: usize) -> Result<(SymmetricOperator, SymmetricOperator)> {
    let (h, v) = model.assemble()?;
    leading_block(&h, &v, p)
}

fn leading_block(h: &SymmetricOperator, v: &SymmetricOperator, p: usize) -> Result<(SymmetricOperator, SymmetricOperator)> {
    if p == 0 || p > h.dim() {
        return Err(OslabError::InvalidParameter(format!(
            "truncation size must lie in 1..={}, got {p}",
            h.dim()
        )));
    }
    Ok((
        SymmetricOperator::new(h.matrix().view((0, 0), (p, p)).into_owned())?,
        SymmetricOperator::new(v.matrix().view((0, 0), (p, p)).into_owned())?,
    ))
}

/// `V_p` zero-padded to the reference dimension.
fn padded(v: &SymmetricOperator, dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (v.dim(), v.dim())).copy_from(v.matrix());
    out
}

/// Compression onto the span of the `k` lowest eigenvectors of `H`,
/// expressed in that eigenbasis.
pub fn projection_compression(
    h: &SymmetricOperator,
    v: &SymmetricOperator,
    k: usize,
) -> Result<(SymmetricOperator, SymmetricOperator)> {
    h.check_dim(v)?;
    if k == 0 || k > h.dim() {
        return Err(OslabError::InvalidParameter(format!(
            "compression rank must lie in 1..={}, got {k}",
            h.dim()
        )));
    }
    let q = h.eigenvectors().columns(0, k).into_owned();
    let hk = SymmetricOperator::diagonal(&h.eigenvalues()[..k]);
    let vk = q.tr_mul(&(v.matrix() * &q));
    let vk = (&vk + vk.transpose()) * 0.5;
    Ok((hk, SymmetricOperator::new(vk)?))
}

/// `‖(I − P_k) V‖` in the Schatten `p`-norm, with `P_k` as in
/// [`projection_compression`].
pub fn compression_tail_norm(h: &SymmetricOperator, v: &SymmetricOperator, k: usize, p: f64) -> Result<f64> {
    h.check_dim(v)?;
    if k > h.dim() {
        return Err(OslabError::InvalidParameter(format!("rank {k} exceeds dimension {}", h.dim())));
    }
    let q = h.eigenvectors().columns(0, k).into_owned();
    let projected = &q * q.tr_mul(v.matrix());
    schatten_norm_general(&(v.matrix() - projected), p)
}

/// One row of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub p: usize,
    /// Distance to the reference-`p` solution.
    pub l1_error: f64,
    /// Smallest sampled value of the `p`-section density or trace derivative.
    pub psi_min: f64,
    /// `n · C_emp · ‖V_P‖₁^{n−1} · ‖V_P − V_p‖₁`.
    pub bound_rhs: f64,
    /// `‖V_P − V_p‖₁` with `V_p` zero-padded.
    pub tail_norm: f64,
    pub verdict: SignVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub order: usize,
    pub rows: Vec<StudyRow>,
    /// Smallest constant making the bound pattern hold on every row.
    pub c_emp: f64,
    /// Reference mass `Tr(V_P^n)/n!` (SSF studies) or `max |ψ_P|`.
    pub scale: f64,
}

impl ConvergenceStudy {
    /// Errors strictly decrease from row to row.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l1_error < w[0].l1_error)
    }

    /// Errors never increase by more than `slack`.
    pub fn nonincreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].l1_error <= w[0].l1_error + slack)
    }

    /// Error at the second-largest `p` relative to the scale (the largest `p`
    /// is the reference and has zero error by construction).
    pub fn final_relative_error(&self) -> f64 {
        let i = self.rows.len().saturating_sub(2);
        self.rows[i].l1_error / self.scale.max(f64::MIN_POSITIVE)
    }

    pub fn verdicts_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict.pass)
    }

    /// CSV with columns `p, l1_error, psi_min, bound_rhs`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["p", "l1_error", "psi_min", "bound_rhs"])?;
        for r in &self.rows {
            writer.write_record([
                r.p.to_string(),
                fmt_f64(r.l1_error),
                fmt_f64(r.psi_min),
                fmt_f64(r.bound_rhs),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn check_p_list(model: &DiagonalModel, p_list: &[usize]) -> Result<()> {
    model.validate()?;
    let ascending = p_list.windows(2).all(|w| w[0] < w[1]);
    if p_list.is_empty() || !ascending || p_list[0] == 0 || *p_list.last().unwrap() > model.size {
        return Err(OslabError::InvalidParameter(format!(
            "p_list must be strictly ascending within 1..={}, got {p_list:?}",
            model.size
        )));
    }
    Ok(())
}

struct Section {
    h: SymmetricOperator,
    v: SymmetricOperator,
    tail_norm: f64,
}

fn sections(model: &DiagonalModel, p_list: &[usize]) -> Result<(Vec<Section>, f64)> {
    check_p_list(model, p_list)?;
    let (h, v) = model.assemble()?;
    let (hr, vr) = leading_block(&h, &v, *p_list.last().unwrap())?;
    let reference_norm = schatten_norm_general(vr.matrix(), 1.0)?;
    let out = p_list
        .iter()
        .map(|&p| {
            let (hp, vp) = leading_block(&hr, &vr, p)?;
            let tail_norm = schatten_norm_general(&(vr.matrix() - padded(&vp, vr.dim())), 1.0)?;
            Ok(Section { h: hp, v: vp, tail_norm })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, reference_norm))
}

/// Fits `C_emp` and fills in the bound column.
fn finish(order: usize, mut rows: Vec<StudyRow>, reference_norm: f64, scale: f64) -> ConvergenceStudy {
    let factor = order as f64 * reference_norm.powi(order as i32 - 1);
    let c_emp = rows
        .iter()
        .filter(|r| r.tail_norm > 0.0 && factor > 0.0)
        .map(|r| r.l1_error / (factor * r.tail_norm))
        .fold(0.0, f64::max);
    for r in &mut rows {
        r.bound_rhs = c_emp * factor * r.tail_norm;
    }
    ConvergenceStudy {
        order,
        rows,
        c_emp,
        scale,
    }
}

/// `∫ |η_{n,P} − η_{n,p}|` on a common grid over the reference hull.
pub fn ssf_convergence_study(model: &DiagonalModel, n: usize, p_list: &[usize], grid_size: usize) -> Result<ConvergenceStudy> {
    if grid_size < MIN_GRID {
        return Err(OslabError::InvalidParameter(format!(
            "density grids need at least {MIN_GRID} points, got {grid_size}"
        )));
    }
    let (sections, reference_norm) = sections(model, p_list)?;
    let reference = sections.last().unwrap();
    let grid = density_grid(ssf_hull(&reference.h, &reference.v)?, grid_size);
    let estimates = sections
        .par_iter()
        .map(|s| ssf_density_on(&s.h, &s.v, n, &grid))
        .collect::<Result<Vec<_>>>()?;
    let reference_density = &estimates.last().unwrap().density;
    let rows = sections
        .iter()
        .zip(&estimates)
        .zip(p_list)
        .map(|((s, est), &p)| {
            let diff: Vec<f64> = est.density.iter().zip(reference_density).map(|(a, b)| (a - b).abs()).collect();
            StudyRow {
                p,
                l1_error: trapezoid(&grid, &diff),
                psi_min: est.density.iter().copied().fold(f64::INFINITY, f64::min),
                bound_rhs: 0.0,
                tail_norm: s.tail_norm,
                verdict: positivity_verdict(est, PerturbationSign::classify(&s.v)),
            }
        })
        .collect();
    Ok(finish(n, rows, reference_norm, ssf_mass(&reference.v, n)))
}

/// `ψ_p(s) = d^n/ds^n Tr f(H_p + sV_p)` on `s_grid`, with the sign rule for
/// functions with completely monotone derivative checked at every `p`. The
/// error column is `∫ |ψ_p − ψ_P| ds` over the grid (the maximum for a
/// single point).
pub fn derivative_trace_truncation_study(
    model: &DiagonalModel,
    f: &dyn SmoothFunction,
    n: usize,
    p_list: &[usize],
    s_grid: &[f64],
) -> Result<ConvergenceStudy> {
    if !f.flags().completely_monotone_derivative {
        return Err(OslabError::InvalidParameter(format!(
            "`{}` is not flagged as having a completely monotone derivative",
            f.name()
        )));
    }
    if n == 0 || s_grid.is_empty() || s_grid.iter().any(|&s| s < 0.0) {
        return Err(OslabError::InvalidParameter(
            "derivative studies need n >= 1 and a non-empty grid of s >= 0".into(),
        ));
    }
    let (sections, reference_norm) = sections(model, p_list)?;
    // f^(n) carries the sign (−1)^(n−1); orient ψ so the parity rule applies
    let orient = if n % 2 == 1 { 1.0 } else { -1.0 };
    let table = sections
        .par_iter()
        .map(|s| {
            s_grid
                .iter()
                .map(|&t| derivative_trace(f, &s.h, &s.v, n, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = table.last().unwrap();
    let scale = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rows = sections
        .iter()
        .zip(&table)
        .zip(p_list)
        .map(|((s, psi), &p)| {
            let diff: Vec<f64> = psi.iter().zip(reference).map(|(a, b)| (a - b).abs()).collect();
            let l1_error = if s_grid.len() == 1 {
                diff[0]
            } else {
                trapezoid(s_grid, &diff)
            };
            let oriented: Vec<f64> = psi.iter().map(|x| orient * x).collect();
            let expectation = Expectation::for_order(n, PerturbationSign::classify(&s.v));
            StudyRow {
                p,
                l1_error,
                psi_min: psi.iter().copied().fold(f64::INFINITY, f64::min),
                bound_rhs: 0.0,
                tail_norm: s.tail_norm,
                verdict: judge(&oriented, expectation, crate::derivatives::SIGN_TOL),
            }
        })
        .collect();
    Ok(finish(n, rows, reference_norm, scale))
}
