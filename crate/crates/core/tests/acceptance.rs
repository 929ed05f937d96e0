//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use oslab::bmv::{
    bernstein_fit, cm_check, cm_fit, heat_and_resolvent_cases, log_grid, CmOptions, DerivativeTrace, DictionarySpec,
};
use oslab::cli::{self, Command, Overrides};
use oslab::derivatives::{
    birman_solomyak_difference, derivative_trace, derivative_trace_verdict, operator_derivative, power_sign_report,
    remainder_trace_integral, taylor_remainder_trace, taylor_remainder_via_perturbation,
};
use oslab::functions::{builtin, FunctionSpec, NegExpDecay, ResolventPower, SmoothFunction};
use oslab::instance::{derived_seed, random_goe, random_nsd_pair, random_psd_pair};
use oslab::moi::{moi_evaluate, perturbation_identity_residual, MoiProblem};
use oslab::spectral::{trace, SymmetricOperator};
use oslab::ssf::{positivity_verdict, ssf_density, trace_formula_via_moments};
use oslab::truncation::{ssf_convergence_study, DiagonalModel};

const BASE_SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn seed(family: u64, i: usize) -> u64 {
    derived_seed(BASE_SEED + family, i as u64)
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// independent oracles

/// `g(A)` through nalgebra's symmetric eigensolver.
fn matrix_function(a: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(g));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Fourth-order central stencils for k = 1, 2, 3 as (offset, weight).
fn stencil(k: usize) -> (&'static [(f64, f64)], f64) {
    match k {
        1 => (&[(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)], 12.0),
        2 => (&[(-2.0, -1.0), (-1.0, 16.0), (0.0, -30.0), (1.0, 16.0), (2.0, -1.0)], 12.0),
        3 => (
            &[(-3.0, 1.0), (-2.0, -8.0), (-1.0, 13.0), (1.0, -13.0), (2.0, 8.0), (3.0, -1.0)],
            8.0,
        ),
        _ => unreachable!("orders above 3 are not exercised"),
    }
}

/// `d^k/dt^k f(H + tV)` at t = 0 by central differences plus one Richardson
/// level. The extrapolated stencil is sixth order, hence the step.
fn fd_oracle(f: &dyn SmoothFunction, h: &DMatrix<f64>, v: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let norm = SymmetricEigen::new(v.clone()).eigenvalues.amax();
    let step = f64::EPSILON.powf(1.0 / (k as f64 + 6.0)) / norm;
    let (weights, denominator) = stencil(k);
    let diff = |step: f64| {
        let mut acc = DMatrix::zeros(h.nrows(), h.ncols());
        for &(offset, w) in weights {
            acc += matrix_function(&(h + v * (offset * step)), |x| f.eval(x, 0)) * w;
        }
        acc / (denominator * step.powi(k as i32))
    };
    (diff(step / 2.0) * 16.0 - diff(step)) / 15.0
}

/// Divided difference of `exp` over `nodes` as the corner entry of the
/// exponential of the bidiagonal matrix with the nodes on its diagonal.
fn exp_divided_difference(nodes: &[f64]) -> f64 {
    let n = nodes.len();
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            nodes[r]
        } else if c == r + 1 {
            1.0
        } else {
            0.0
        }
    });
    j.exp()[(0, n - 1)]
}

/// `Σ f^[n](λ_{i0}, …) P_{i0} V_1 P_{i1} ⋯ V_n P_{in}` with `f = exp`.
fn projector_sum(bases: &[DMatrix<f64>], perturbations: &[DMatrix<f64>]) -> DMatrix<f64> {
    let eigs: Vec<SymmetricEigen<f64, nalgebra::Dyn>> = bases.iter().map(|b| SymmetricEigen::new(b.clone())).collect();
    let d = bases[0].nrows();
    let n = perturbations.len();
    let mut out = DMatrix::zeros(d, d);
    let mut index = vec![0usize; n + 1];
    loop {
        let nodes: Vec<f64> = (0..=n).map(|m| eigs[m].eigenvalues[index[m]]).collect();
        let mut coupling = exp_divided_difference(&nodes);
        for m in 0..n {
            let left = eigs[m].eigenvectors.column(index[m]);
            let right = eigs[m + 1].eigenvectors.column(index[m + 1]);
            coupling *= (left.transpose() * &perturbations[m] * right)[(0, 0)];
        }
        let q0 = eigs[0].eigenvectors.column(index[0]);
        let qn = eigs[n].eigenvectors.column(index[n]);
        out += q0 * qn.transpose() * coupling;
        // odometer over all index tuples
        let mut m = 0;
        loop {
            if m > n {
                return out;
            }
            index[m] += 1;
            if index[m] < d {
                break;
            }
            index[m] = 0;
            m += 1;
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Tr(Vⁿ)/n!` and `Tr|V|ⁿ/n!` from nalgebra eigenvalues.
fn mass_and_scale(v: &DMatrix<f64>, n: usize) -> (f64, f64) {
    let eig = SymmetricEigen::new(v.clone()).eigenvalues;
    let mass = eig.iter().map(|x| x.powi(n as i32)).sum::<f64>() / factorial(n);
    let scale = eig.iter().map(|x| x.abs().powi(n as i32)).sum::<f64>() / factorial(n);
    (mass, scale)
}

/// Bump centered on the joint spectrum of `H` and `H + V` with a unit margin
/// on each side of the hull.
fn centered_bump(h: &SymmetricOperator, v: &SymmetricOperator) -> Box<dyn SmoothFunction> {
    let hv = h.add_scaled(v, 1.0).unwrap();
    let lo = h.min_eigenvalue().min(hv.min_eigenvalue()) - v.operator_norm();
    let hi = h.max_eigenvalue().max(hv.max_eigenvalue()) + v.operator_norm();
    let spec = FunctionSpec::new("bump")
        .with("center", 0.5 * (lo + hi))
        .with("radius", 0.5 * (hi - lo) + 1.0)
        .with("height", 1.0);
    builtin(&spec).unwrap()
}

fn exp_fn() -> Box<dyn SmoothFunction> {
    builtin(&FunctionSpec::new("exp")).unwrap()
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// criteria

fn derivative_vs_oracle() -> Verdict {
    let errors: Vec<f64> = (0..50)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + i % 5;
            let (h, v) = random_goe(dim, seed(1, i)).unwrap();
            let k = 1 + i % 3;
            let f = if i % 2 == 0 { exp_fn() } else { centered_bump(&h, &v) };
            let d = operator_derivative(f.as_ref(), &h, &v, k, 0.0).unwrap();
            let oracle = fd_oracle(f.as_ref(), h.matrix(), v.matrix(), k);
            max_abs(&(&d - &oracle)) / max_abs(&oracle)
        })
        .collect();
    let w = worst(errors);
    Verdict::new(w <= 1e-6, format!("50 instances, worst relative max-norm error {w:.2e} (tol 1e-6)"))
}

fn moi_oracle() -> Verdict {
    let f = exp_fn();
    let errors: Vec<f64> = (0..25)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + i % 3;
            let n = 1 + i % 3;
            let mut bases: Vec<SymmetricOperator> = (0..=n)
                .map(|m| random_goe(dim, seed(2, i * 10 + m)).unwrap().0)
                .collect();
            if i % 4 == 0 {
                // repeated bases exercise coincident nodes
                for m in 1..=n {
                    bases[m] = bases[0].clone();
                }
            }
            let perturbations: Vec<DMatrix<f64>> = (0..n)
                .map(|m| random_goe(dim, seed(2, i * 10 + m)).unwrap().1.matrix().clone())
                .collect();
            let p = MoiProblem::new(bases.iter().collect(), perturbations.iter().collect(), f.as_ref()).unwrap();
            let value = moi_evaluate(&p);
            let plain: Vec<DMatrix<f64>> = bases.iter().map(|b| b.matrix().clone()).collect();
            let oracle = projector_sum(&plain, &perturbations);
            max_abs(&(&value - &oracle)) / max_abs(&oracle)
        })
        .collect();
    let w = worst(errors);
    Verdict::new(w <= 1e-9, format!("25 instances, worst relative error {w:.2e} (tol 1e-9)"))
}

fn perturbation_identity() -> Verdict {
    let f = exp_fn();
    let residuals: Vec<f64> = (0..25)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + i % 4;
            let n = 1 + i % 4;
            let (h, k) = random_goe(dim, seed(3, i)).unwrap();
            let bases: Vec<SymmetricOperator> = (0..n - 1).map(|m| random_goe(dim, seed(3, 100 + i * 10 + m)).unwrap().0).collect();
            let perturbations: Vec<DMatrix<f64>> = (0..n - 1)
                .map(|m| random_goe(dim, seed(3, 100 + i * 10 + m)).unwrap().1.matrix().clone())
                .collect();
            let insert = 1 + i % n;
            perturbation_identity_residual(f.as_ref(), n, &h, &k, insert, &bases, &perturbations)
                .unwrap()
                .relative()
        })
        .collect();
    let w = worst(residuals);
    Verdict::new(w <= 1e-8, format!("25 instances, worst residual/scale {w:.2e} (tol 1e-8)"))
}

fn remainder_triple() -> Verdict {
    let quad_tol = 1e-8;
    let tol = f64::max(1e-8, quad_tol);
    let gaps: Vec<f64> = (0..25)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + i % 4;
            let n = 1 + i % 4;
            let (h, v) = random_goe(dim, seed(4, i)).unwrap();
            let f = if i % 2 == 0 { exp_fn() } else { centered_bump(&h, &v) };
            let direct = taylor_remainder_trace(f.as_ref(), &h, &v, n).unwrap();
            let perturbation = if n == 1 {
                trace(&birman_solomyak_difference(f.as_ref(), &h, &v).unwrap())
            } else {
                trace(&taylor_remainder_via_perturbation(f.as_ref(), &h, &v, n).unwrap())
            };
            let integral = remainder_trace_integral(f.as_ref(), &h, &v, n, quad_tol).unwrap().value;
            let scale = direct.abs().max(1.0);
            worst([
                (direct - perturbation).abs() / scale,
                (direct - integral).abs() / scale,
                (perturbation - integral).abs() / scale,
            ])
        })
        .collect();
    let w = worst(gaps);
    Verdict::new(
        w <= tol,
        format!("25 instances, worst pairwise gap / max(1, |Tr R_n|) {w:.2e} (tol {tol:.0e})"),
    )
}

struct ClosureRow {
    grid: f64,
    moment: f64,
    mass: f64,
}

fn closure_rows() -> Vec<ClosureRow> {
    (0..20)
        .into_par_iter()
        .map(|i| {
            let dim = 2 + i % 4;
            let n = 1 + i % 3;
            let (h, v) = random_goe(dim, seed(5, i)).unwrap();
            let f = if i % 2 == 0 { exp_fn() } else { centered_bump(&h, &v) };
            let remainder = taylor_remainder_trace(f.as_ref(), &h, &v, n).unwrap();
            let est = ssf_density(&h, &v, n, 4001).unwrap();
            let via_grid = est.integrate(|x| f.eval(x, n));
            let via_moments = trace_formula_via_moments(f.as_ref(), &h, &v, n).unwrap().value;
            let (mass, _) = mass_and_scale(v.matrix(), n);
            ClosureRow {
                grid: (via_grid - remainder).abs() / remainder.abs(),
                moment: (via_moments - remainder).abs() / remainder.abs(),
                mass: (est.mass() - mass).abs() / mass.abs(),
            }
        })
        .collect()
}

fn trace_formula_closure(rows: &[ClosureRow]) -> Verdict {
    let g = worst(rows.iter().map(|r| r.grid));
    let m = worst(rows.iter().map(|r| r.moment));
    Verdict::new(
        g <= 1e-3 && m <= 1e-6,
        format!("20 instances, worst relative gap: grid {g:.2e} (tol 1e-3), moments {m:.2e} (tol 1e-6)"),
    )
}

fn ssf_mass(rows: &[ClosureRow]) -> Verdict {
    let w = worst(rows.iter().map(|r| r.mass));
    Verdict::new(w <= 1e-6, format!("20 instances, worst relative mass error {w:.2e} (tol 1e-6)"))
}

/// Instance `i` of the positivity suites: n cycles through 2, 3, 3, 4 with
/// the two odd slots taking PSD and NSD perturbations.
fn positivity_instance(family: u64, i: usize) -> (usize, SymmetricOperator, SymmetricOperator, &'static str) {
    let dim = 2 + i % 7;
    let s = seed(family, i);
    match i % 4 {
        0 => {
            let (h, v) = random_goe(dim, s).unwrap();
            (2, h, v, "indefinite")
        }
        1 => {
            let (h, v) = random_psd_pair(dim, s).unwrap();
            (3, h, v, "psd")
        }
        2 => {
            let (h, v) = random_nsd_pair(dim, s).unwrap();
            (3, h, v, "nsd")
        }
        _ => {
            let (h, v) = random_goe(dim, s).unwrap();
            (4, h, v, "indefinite")
        }
    }
}

fn ssf_positivity() -> Verdict {
    let results: Vec<(bool, f64)> = (0..120)
        .into_par_iter()
        .map(|i| {
            let (n, h, v, _) = positivity_instance(7, i);
            let est = ssf_density(&h, &v, n, 1001).unwrap();
            let verdict = positivity_verdict(&est, oslab::verdict::PerturbationSign::classify(&v));
            (verdict.pass, verdict.margin)
        })
        .collect();
    let failures = results.iter().filter(|r| !r.0).count();
    let margin = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Verdict::new(
        failures == 0,
        format!("120 instances (n = 2, 3 PSD, 3 NSD, 4), {failures} failures, worst signed min/max {margin:.2e}"),
    )
}

fn derivative_trace_positivity() -> Verdict {
    let f = exp_fn();
    let s_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let results: Vec<(bool, f64)> = (0..120)
        .into_par_iter()
        .map(|i| {
            let (n, h, v, _) = positivity_instance(8, i);
            let (_, verdict) = derivative_trace_verdict(f.as_ref(), &h, &v, n, &s_grid).unwrap();
            (verdict.pass, verdict.margin)
        })
        .collect();
    let failures = results.iter().filter(|r| !r.0).count();
    let margin = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Verdict::new(
        failures == 0,
        format!("120 instances on an 11-point s-grid, {failures} failures, worst signed min/max {margin:.2e}"),
    )
}

fn power_signs() -> Verdict {
    let s_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let results: Vec<bool> = (0..20)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (h, v) = random_psd_pair(2 + i % 5, seed(9, i)).unwrap();
            let lambda = h.min_eigenvalue() - 0.5;
            let grid = s_grid.clone();
            [0.5, 1.5, 2.0, -1.0].into_iter().flat_map(move |p| {
                let (h, v, grid) = (h.clone(), v.clone(), grid.clone());
                (1..=4).map(move |k| power_sign_report(&h, &v, p, lambda, k, &grid).unwrap().pass)
            })
        })
        .collect();
    let failures = results.iter().filter(|p| !**p).count();
    Verdict::new(
        failures == 0,
        format!("20 PSD instances × p ∈ {{1/2, 3/2, 2, -1}} × k ≤ 4 = {} reports, {failures} failures", results.len()),
    )
}

fn bmv_exactness() -> Verdict {
    let grid = log_grid(0.01, 10.0, 64);
    let dictionary = DictionarySpec::default();
    let cell = 10f64.powf(1.0 / dictionary.per_decade as f64);
    let cases = [
        (vec![0.0], vec![1.0]),
        (vec![0.0, 2f64.ln()], vec![1.0, 2.0]),
        (vec![0.2, 0.9, 1.4], vec![0.5, 1.0, 3.0]),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (hd, vd) in &cases {
        let h = SymmetricOperator::diagonal(hd);
        let v = SymmetricOperator::diagonal(vd);
        let fit = heat_and_resolvent_cases(&h, &v, &grid, h.min_eigenvalue() - 1.0, 1.0, dictionary)
            .unwrap()
            .heat;
        // e^{-a} - e^{-a - t v} summed: atoms at v_i with weight e^{-a_i}
        let mut expected: Vec<(f64, f64)> = hd.iter().zip(vd).map(|(&a, &s)| (s, (-a).exp())).collect();
        expected.sort_by(|x, y| x.0.total_cmp(&y.0));
        let atoms = &fit.pair.atoms;
        let total: f64 = expected.iter().map(|e| e.1).sum();
        let ok = fit.pair.b.abs() <= 1e-9 * total
            && fit.residual_rel <= 1e-6
            && atoms.len() == expected.len()
            && atoms.iter().zip(&expected).all(|(a, e)| {
                (a.s / e.0).max(e.0 / a.s) <= cell && (a.w - e.1).abs() <= 1e-3
            });
        pass &= ok;
        notes.push(format!(
            "{} atom(s): b {:.1e}, residual {:.1e}, {}",
            expected.len(),
            fit.pair.b,
            fit.residual_rel,
            if ok { "exact" } else { "MISMATCH" }
        ));
    }
    Verdict::new(pass, notes.join("; "))
}

fn bmv_generic() -> Verdict {
    let grid = log_grid(0.01, 10.0, 64);
    let dictionary = DictionarySpec::default();
    let options = CmOptions::default();
    let rows: Vec<(bool, f64)> = (0..10)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (h, v) = random_psd_pair(2 + i % 5, seed(11, i)).unwrap();
            let lambda = h.min_eigenvalue() - 1.0;
            let grid = grid.clone();
            [1.0, 2.0].into_iter().flat_map(move |r| {
                let cases = heat_and_resolvent_cases(&h, &v, &grid, lambda, r, dictionary).unwrap();
                let resolvent = ResolventPower::new(r, lambda).unwrap();
                let heat_cm = cm_check(&DerivativeTrace { f: &NegExpDecay, h: &h, v: &v, n: 1, sign: 1.0 }, options, &grid).unwrap();
                let res_cm = cm_check(&DerivativeTrace { f: &resolvent, h: &h, v: &v, n: 1, sign: 1.0 }, options, &grid).unwrap();
                // the fit of the raw Bernstein samples must agree with the returned pair
                let raw = bernstein_fit(&grid, &cases.heat.t_grid.iter().map(|&t| -cases.heat.pair.value(t)).collect::<Vec<_>>(), dictionary)
                    .unwrap();
                vec![
                    (heat_cm.verdict && cases.heat.residual_rel <= 1e-4, cases.heat.residual_rel),
                    (res_cm.verdict && cases.resolvent.residual_rel <= 1e-4, cases.resolvent.residual_rel),
                    (raw.residual_rel <= 1e-4, raw.residual_rel),
                ]
            })
        })
        .collect();
    let failures = rows.iter().filter(|r| !r.0).count();
    let w = worst(rows.iter().map(|r| r.1));
    Verdict::new(
        failures == 0,
        format!("10 PSD instances × heat/resolvent × r ∈ {{1, 2}}: {failures} failures, worst fit residual {w:.2e} (tol 1e-4)"),
    )
}

fn cm_derivative_traces() -> Verdict {
    let grid = log_grid(0.01, 10.0, 64);
    let rows: Vec<(bool, f64)> = (0..10)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (h, v) = random_psd_pair(2 + i % 5, seed(12, i)).unwrap();
            let grid = grid.clone();
            (1..=3).map(move |n| {
                let psi: Vec<f64> = grid.iter().map(|&t| derivative_trace(&NegExpDecay, &h, &v, n, t).unwrap()).collect();
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                let fit = cm_fit(&grid, &psi, sign, DictionarySpec::default()).unwrap();
                let ok = fit.residual_rel <= 1e-4 && fit.pair.atoms.iter().all(|a| a.w >= 0.0);
                (ok, fit.residual_rel)
            })
        })
        .collect();
    let failures = rows.iter().filter(|r| !r.0).count();
    let w = worst(rows.iter().map(|r| r.1));
    Verdict::new(
        failures == 0,
        format!("10 PSD instances × n ∈ {{1, 2, 3}}: {failures} failures, worst residual {w:.2e} (tol 1e-4)"),
    )
}

fn truncation_convergence() -> Verdict {
    let model = DiagonalModel::fixture(32, BASE_SEED);
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [1, 2] {
        let study = ssf_convergence_study(&model, n, &[4, 8, 16, 32], 2001).unwrap();
        let ok = study.strictly_decreasing() && study.final_relative_error() <= 1e-3;
        pass &= ok;
        let column: Vec<String> = study.rows.iter().map(|r| format!("{:.1e}", r.l1_error)).collect();
        notes.push(format!(
            "n={n}: L1 errors [{}], at p=16 {:.1e} of mass",
            column.join(", "),
            study.final_relative_error()
        ));
    }
    Verdict::new(pass, notes.join("; "))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("suite.json");
    fs::write(&config, r#"{"schema": 1, "command": "verify-all"}"#).unwrap();
    let mut codes = Vec::new();
    for run in ["a", "b"] {
        let overrides = Overrides {
            out: Some(tmp.path().join(run)),
            seed: Some(BASE_SEED),
            jobs: None,
        };
        codes.push(cli::run(Command::VerifyAll, &config, &overrides));
    }
    let a = tree(&tmp.path().join("a"));
    let b = tree(&tmp.path().join("b"));
    let bytes: usize = a.iter().map(|f| f.1.len()).sum();
    let identical = a == b;
    Verdict::new(
        identical && codes == [0, 0],
        format!(
            "verify-all twice: exit codes {codes:?}, {} files / {bytes} bytes, {}",
            a.len(),
            if identical { "byte-identical" } else { "DIFFERENT" }
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut all_pass = true;
    let mut report = |id: u32, name: &str, limit: Option<u64>, run: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let verdict = run();
        let elapsed = t.elapsed();
        let in_time = limit.is_none_or(|s| elapsed <= Duration::from_secs(s));
        let pass = verdict.pass && in_time;
        all_pass &= pass;
        let limit = limit.map(|s| format!(", limit {s} s")).unwrap_or_default();
        println!(
            "{} {id:>2} {name}: {} [{:.2} s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            verdict.detail,
            elapsed.as_secs_f64()
        );
    };
    report(1, "derivative vs finite-difference oracle", Some(30), &derivative_vs_oracle);
    report(2, "MOI vs projector-sum oracle", Some(10), &moi_oracle);
    report(3, "perturbation identity", None, &perturbation_identity);
    report(4, "remainder triple agreement", None, &remainder_triple);
    let rows = closure_rows();
    report(5, "trace formula closure", None, &|| trace_formula_closure(&rows));
    report(6, "SSF mass", None, &|| ssf_mass(&rows));
    report(7, "SSF positivity", None, &ssf_positivity);
    report(8, "derivative-trace positivity", None, &derivative_trace_positivity);
    report(9, "power-function signs", None, &power_signs);
    report(10, "BMV scalar/commuting exactness", None, &bmv_exactness);
    report(11, "BMV generic", None, &bmv_generic);
    report(12, "CM of derivative traces", None, &cm_derivative_traces);
    report(13, "truncation convergence", None, &truncation_convergence);
    report(14, "determinism", None, &determinism);
    let total = start.elapsed();
    let in_budget = total <= Duration::from_secs(300);
    println!(
        "{} total runtime {:.1} s (budget 300 s)",
        if in_budget { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    if all_pass && in_budget {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
