//! Multilinear operator integrals in finite dimension.
//!
//! For base operators `H_0, ..., H_n` with eigenpairs `(λ^ℓ_i, q^ℓ_i)` and
//! perturbations `V_1, ..., V_n`,
//!
//! ```text
//! T(V_1, ..., V_n) = Σ f^[n](λ^0_{i_0}, ..., λ^n_{i_n}) P^0_{i_0} V_1 P^1_{i_1} ⋯ V_n P^n_{i_n}
//! ```
//!
//! which is evaluated as `Q_0 M Q_nᵀ` with
//! `M(i_0, i_n) = Σ f^[n](…) W_1(i_0, i_1) ⋯ W_n(i_{n-1}, i_n)` and
//! `W_ℓ = Q_{ℓ-1}ᵀ V_ℓ Q_ℓ`. The divided-difference tensor is memoised per
//! evaluation.

use nalgebra::DMatrix;

use crate::error::{OslabError, Result};
use crate::functions::{DividedDifferenceCache, SmoothFunction};
use crate::spectral::{
    joint_spectral_interval, linspace, max_abs, schatten_norm_general, SymmetricOperator,
    CLUSTER_TOL,
};

/// One multilinear operator integral `T^{H_0..H_n}_{f^[n]}(V_1..V_n)`.
///
/// `n = 0` is allowed and gives `f(H_0)`.
#[derive(Debug, Clone)]
pub struct MoiProblem<'a> {
    bases: Vec<&'a SymmetricOperator>,
    perturbations: Vec<&'a DMatrix<f64>>,
    symbol: &'a dyn SmoothFunction,
}

impl<'a> MoiProblem<'a> {
    pub fn new(
        bases: Vec<&'a SymmetricOperator>,
        perturbations: Vec<&'a DMatrix<f64>>,
        symbol: &'a dyn SmoothFunction,
    ) -> Result<Self> {
        if bases.len() != perturbations.len() + 1 {
            return Err(OslabError::InvalidParameter(format!(
                "an order-{} integral needs {} base operators, got {}",
                perturbations.len(),
                perturbations.len() + 1,
                bases.len()
            )));
        }
        let dim = bases[0].dim();
        for h in &bases {
            if h.dim() != dim {
                return Err(OslabError::DimensionMismatch {
                    expected: dim,
                    found: h.dim(),
                });
            }
            h.check_in_domain(symbol)?;
        }
        for v in &perturbations {
            if v.nrows() != dim || v.ncols() != dim {
                return Err(OslabError::DimensionMismatch {
                    expected: dim,
                    found: if v.nrows() != dim { v.nrows() } else { v.ncols() },
                });
            }
        }
        let order = perturbations.len();
        if order > symbol.max_order() {
            return Err(OslabError::OrderTooHigh {
                function: symbol.name().to_string(),
                max_order: symbol.max_order(),
                requested: order,
            });
        }
        Ok(Self {
            bases,
            perturbations,
            symbol,
        })
    }

    /// All `n + 1` bases equal to `h`, all perturbations equal to `v`.
    pub fn uniform(
        h: &'a SymmetricOperator,
        v: &'a DMatrix<f64>,
        order: usize,
        symbol: &'a dyn SmoothFunction,
    ) -> Result<Self> {
        Self::new(vec![h; order + 1], vec![v; order], symbol)
    }

    pub fn order(&self) -> usize {
        self.perturbations.len()
    }

    pub fn dim(&self) -> usize {
        self.bases[0].dim()
    }

    pub fn bases(&self) -> &[&'a SymmetricOperator] {
        &self.bases
    }

    pub fn perturbations(&self) -> &[&'a DMatrix<f64>] {
        &self.perturbations
    }

    pub fn symbol(&self) -> &'a dyn SmoothFunction {
        self.symbol
    }

    fn cluster_tolerance(&self) -> f64 {
        let scale = self
            .bases
            .iter()
            .fold(1.0f64, |m, h| m.max(h.operator_norm()));
        CLUSTER_TOL * scale
    }

    fn first_equals_last(&self) -> bool {
        let n = self.order();
        std::ptr::eq(self.bases[0], self.bases[n]) || self.bases[0].matrix() == self.bases[n].matrix()
    }

    fn contraction(&self) -> Contraction<'_> {
        let n = self.order();
        let weights = (1..=n)
            .map(|l| {
                self.bases[l - 1].eigenvectors().transpose()
                    * self.perturbations[l - 1]
                    * self.bases[l].eigenvectors()
            })
            .collect();
        Contraction {
            weights,
            spectra: self.bases.iter().map(|h| h.eigenvalues()).collect(),
            cache: DividedDifferenceCache::new(self.symbol, self.cluster_tolerance()),
            nodes: vec![0.0; n + 1],
        }
    }
}

struct Contraction<'p> {
    weights: Vec<DMatrix<f64>>,
    spectra: Vec<&'p [f64]>,
    cache: DividedDifferenceCache<'p>,
    nodes: Vec<f64>,
}

impl Contraction<'_> {
    /// Adds row `i_0` of the inner matrix `M` into `row`. With `only_last`
    /// set, the last summation index is pinned to that value.
    fn row(&mut self, i0: usize, row: &mut [f64], only_last: Option<usize>) {
        self.nodes[0] = self.spectra[0][i0];
        let n = self.weights.len();
        if n == 0 {
            row[i0] += self.cache.get(&self.nodes);
            return;
        }
        self.descend(1, i0, 1.0, row, only_last);
    }

    fn descend(&mut self, level: usize, prev: usize, weight: f64, row: &mut [f64], only_last: Option<usize>) {
        let n = self.weights.len();
        let dim = self.spectra[level].len();
        let range = match (level == n, only_last) {
            (true, Some(i)) => i..i + 1,
            _ => 0..dim,
        };
        for i in range {
            let w = weight * self.weights[level - 1][(prev, i)];
            if w == 0.0 {
                continue;
            }
            self.nodes[level] = self.spectra[level][i];
            if level == n {
                row[i] += w * self.cache.get(&self.nodes);
            } else {
                self.descend(level + 1, i, w, row, only_last);
            }
        }
    }
}

/// `T^{H_0..H_n}_{f^[n]}(V_1..V_n)` as a dense (generally non-symmetric) matrix.
pub fn moi_evaluate(p: &MoiProblem<'_>) -> DMatrix<f64> {
    let d = p.dim();
    let n = p.order();
    let mut contraction = p.contraction();
    let mut inner = DMatrix::<f64>::zeros(d, d);
    let mut row = vec![0.0; d];
    for i0 in 0..d {
        row.fill(0.0);
        contraction.row(i0, &mut row, None);
        for (j, &v) in row.iter().enumerate() {
            inner[(i0, j)] = v;
        }
    }
    p.bases[0].eigenvectors() * inner * p.bases[n].eigenvectors().transpose()
}

/// `Tr T^{H_0..H_n}_{f^[n]}(V_1..V_n)`, contracting the last index against
/// the first instead of materialising the product.
pub fn moi_trace(p: &MoiProblem<'_>) -> f64 {
    let d = p.dim();
    let n = p.order();
    let mut contraction = p.contraction();
    let mut row = vec![0.0; d];
    if p.first_equals_last() {
        let mut total = 0.0;
        for i0 in 0..d {
            row.fill(0.0);
            contraction.row(i0, &mut row, Some(i0));
            total += row[i0];
        }
        return total;
    }
    // Tr(Q_0 M Q_nᵀ) = Σ M(i_0, i_n) (Q_nᵀ Q_0)(i_n, i_0)
    let closing = p.bases[n].eigenvectors().transpose() * p.bases[0].eigenvectors();
    let mut total = 0.0;
    for i0 in 0..d {
        row.fill(0.0);
        contraction.row(i0, &mut row, None);
        total += row
            .iter()
            .enumerate()
            .map(|(j, &m)| m * closing[(j, i0)])
            .sum::<f64>();
    }
    total
}

/// Residual of the perturbation formula
///
/// ```text
/// T^{…,H,…}_{f^[n-1]}(V⃗) − T^{…,K,…}_{f^[n-1]}(V⃗) = T^{…,H,K,…}_{f^[n]}(…, H − K, …)
/// ```
#[derive(Debug, Clone, Copy)]
pub struct IdentityResidual {
    /// `max |LHS − RHS|` entrywise.
    pub residual: f64,
    /// Largest entry among the three integrals, floored at 1.
    pub scale: f64,
}

impl IdentityResidual {
    pub fn relative(&self) -> f64 {
        self.residual / self.scale
    }
}

/// `bases` holds `H_1..H_{n-1}`, `perturbations` holds `V_1..V_{n-1}`; `H`
/// and `K` are inserted before `H_insert` (1-based, `1 <= insert <= n`) and
/// `H − K` takes the `insert`-th perturbation slot on the right-hand side.
pub fn perturbation_identity_residual(
    f: &dyn SmoothFunction,
    n: usize,
    h: &SymmetricOperator,
    k: &SymmetricOperator,
    insert: usize,
    bases: &[SymmetricOperator],
    perturbations: &[DMatrix<f64>],
) -> Result<IdentityResidual> {
    if n == 0 || bases.len() != n - 1 || perturbations.len() != n - 1 {
        return Err(OslabError::InvalidParameter(format!(
            "order {n} needs {} interior bases and perturbations, got {} and {}",
            n.saturating_sub(1),
            bases.len(),
            perturbations.len()
        )));
    }
    if insert == 0 || insert > n {
        return Err(OslabError::InvalidParameter(format!(
            "insertion index must lie in 1..={n}, got {insert}"
        )));
    }
    h.check_dim(k)?;
    let split = insert - 1;
    let difference = h.matrix() - k.matrix();

    let with = |x: &'_ SymmetricOperator| -> Result<DMatrix<f64>> {
        let mut b: Vec<&SymmetricOperator> = bases[..split].iter().collect();
        b.push(x);
        b.extend(bases[split..].iter());
        let v: Vec<&DMatrix<f64>> = perturbations.iter().collect();
        Ok(moi_evaluate(&MoiProblem::new(b, v, f)?))
    };
    let lhs_h = with(h)?;
    let lhs_k = with(k)?;

    let mut b: Vec<&SymmetricOperator> = bases[..split].iter().collect();
    b.push(h);
    b.push(k);
    b.extend(bases[split..].iter());
    let mut v: Vec<&DMatrix<f64>> = perturbations[..split].iter().collect();
    v.push(&difference);
    v.extend(perturbations[split..].iter());
    let rhs = moi_evaluate(&MoiProblem::new(b, v, f)?);

    let residual = max_abs(&(&lhs_h - &lhs_k - &rhs));
    let scale = max_abs(&lhs_h).max(max_abs(&lhs_k)).max(max_abs(&rhs)).max(1.0);
    Ok(IdentityResidual { residual, scale })
}

/// `|Tr T| / (‖f^(n)‖_∞ · Π ‖V_ℓ‖_{α_ℓ})` with the sup norm taken over the
/// joint spectral hull of the base operators.
pub fn trace_bound_ratio(p: &MoiProblem<'_>, exponents: &[f64]) -> Result<f64> {
    let n = p.order();
    if exponents.len() != n || n == 0 {
        return Err(OslabError::InvalidParameter(format!(
            "need one exponent per perturbation ({n}), got {}",
            exponents.len()
        )));
    }
    if exponents.iter().any(|&a| a.is_nan() || a < 1.0) {
        return Err(OslabError::InvalidParameter(format!(
            "Schatten exponents must lie in [1, ∞], got {exponents:?}"
        )));
    }
    let reciprocal_sum: f64 = exponents.iter().map(|a| 1.0 / a).sum();
    if (reciprocal_sum - 1.0).abs() > 1e-12 {
        return Err(OslabError::InvalidParameter(format!(
            "reciprocal exponents must sum to 1, got {reciprocal_sum}"
        )));
    }
    let mut norm_product = 1.0;
    for (v, &alpha) in p.perturbations.iter().zip(exponents) {
        norm_product *= schatten_norm_general(v, alpha)?;
    }
    if norm_product == 0.0 {
        return Ok(0.0);
    }
    let hull = joint_spectral_interval(p.bases.iter().copied());
    let sup = derivative_sup(p.symbol, n, hull.lo, hull.hi, p.bases.iter().flat_map(|h| h.eigenvalues().iter().copied()));
    let trace = moi_trace(p).abs();
    if sup == 0.0 {
        return Ok(if trace == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(trace / (sup * norm_product))
}

/// `max |f^(k)|` sampled on 2001 points of `[lo, hi]` plus the given extras.
pub fn derivative_sup(
    f: &dyn SmoothFunction,
    k: usize,
    lo: f64,
    hi: f64,
    extra: impl IntoIterator<Item = f64>,
) -> f64 {
    linspace(lo, hi, 2001)
        .into_iter()
        .chain(extra)
        .map(|x| f.eval(x, k).abs())
        .fold(0.0, f64::max)
}
