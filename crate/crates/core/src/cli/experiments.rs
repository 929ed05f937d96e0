//! Experiment implementations keyed by command name.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use super::config::{BmvParams, Command, ExperimentConfig, Grids, InstanceSpec, SuiteParams, Tolerances};
use crate::bmv::{
    cm_check, cm_fit, heat_and_resolvent_cases, log_grid, remainder_laplace_check, CmOptions, CmReport, DerivativeTrace,
    DictionarySpec, FitReport,
};
use crate::derivatives::{
    birman_solomyak_difference, default_step, derivative_trace, derivative_trace_verdict, finite_difference_oracle,
    operator_derivative, remainder_trace_integral, taylor_remainder_trace, taylor_remainder_via_perturbation,
};
use crate::error::{OslabError, Result};
use crate::functions::{BoxedFunction, FunctionRegistry, FunctionSpec, NegExpDecay, ResolventPower};
use crate::instance::derived_seed;
use crate::io::{fmt_f64, matrix_to_json};
use crate::moi::perturbation_identity_residual;
use crate::spectral::{max_abs, trace, SymmetricOperator};
use crate::ssf::{positivity_verdict, ssf_density, ssf_mass, trace_formula_via_moments};
use crate::truncation::{derivative_trace_truncation_study, ssf_convergence_study, ConvergenceStudy, DiagonalModel};
use crate::verdict::PerturbationSign;

/// The operator pair an experiment runs on.
#[derive(Debug, Clone)]
pub enum Instance {
    Pair {
        h: SymmetricOperator,
        v: SymmetricOperator,
    },
    Model {
        model: DiagonalModel,
        h: SymmetricOperator,
        v: SymmetricOperator,
    },
    /// Suites generate their own instances.
    Suite,
}

/// A fully resolved experiment: command, instance and parameters.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub command: Command,
    pub seed: u64,
    pub instance: Instance,
    pub function: Option<FunctionSpec>,
    pub order: Option<usize>,
    pub grids: Grids,
    pub tolerances: Tolerances,
    pub bmv: BmvParams,
    pub suite: SuiteParams,
}

impl Job {
    fn pair(&self) -> Result<(&SymmetricOperator, &SymmetricOperator)> {
        match &self.instance {
            Instance::Pair { h, v } | Instance::Model { h, v, .. } => Ok((h, v)),
            Instance::Suite => Err(OslabError::InvalidParameter(format!("`{}` needs an operator pair", self.command))),
        }
    }

    fn function(&self, default: &str) -> Result<BoxedFunction> {
        let spec = self.function.clone().unwrap_or_else(|| FunctionSpec::new(default));
        FunctionRegistry::with_builtins().build(&spec)
    }

    /// Standalone config reproducing this job, with the matrices it needs
    /// written next to it as `h.json` and `v.json`.
    pub fn replay_config(&self) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(self.command);
        config.seed = Some(self.seed);
        config.instance = match &self.instance {
            Instance::Pair { .. } => Some(InstanceSpec::File {
                h: "h.json".into(),
                v: "v.json".into(),
            }),
            Instance::Model { model, .. } => Some(InstanceSpec::from_model(model)),
            Instance::Suite => None,
        };
        config.function = self.function.clone();
        config.order = self.order;
        config.grids = self.grids.clone();
        config.tolerances = self.tolerances;
        config.bmv = self.bmv;
        config.suite = self.suite;
        config
    }

    /// Files making up the replay directory.
    pub fn replay_files(&self) -> Vec<(String, Vec<u8>)> {
        let mut files = vec![("config.json".to_string(), self.replay_config().to_json().into_bytes())];
        if let Instance::Pair { h, v } = &self.instance {
            files.push(("h.json".into(), matrix_to_json(h.matrix()).into_bytes()));
            files.push(("v.json".into(), matrix_to_json(v.matrix()).into_bytes()));
        }
        files
    }

    fn child(&self, label: String, command: Command, seed: u64, instance: Instance) -> Job {
        Job {
            label,
            command,
            seed,
            instance,
            function: None,
            order: None,
            grids: self.grids.clone(),
            tolerances: self.tolerances,
            bmv: self.bmv,
            suite: self.suite,
        }
    }
}

/// One asserted verdict.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Job to serialize if the check fails.
    pub replay: Option<Arc<Job>>,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, value <= tolerance)
    }

    pub fn new(name: impl Into<String>, value: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass,
            replay: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// Relative path and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn artifact(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push((path.into(), bytes));
    }

    fn check(&mut self, check: Check) {
        self.checks.push(check);
    }
}

pub trait Experiment: Send + Sync {
    fn command(&self) -> Command;

    fn run(&self, job: &Arc<Job>, registry: &ExperimentRegistry) -> Result<Outcome>;
}

/// Command → experiment table.
pub struct ExperimentRegistry {
    experiments: HashMap<Command, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> Self {
        Self {
            experiments: HashMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(DerivativeExperiment));
        registry.register(Box::new(RemainderExperiment));
        registry.register(Box::new(SsfExperiment));
        registry.register(Box::new(BmvExperiment));
        registry.register(Box::new(TruncationExperiment));
        registry.register(Box::new(VerifyAll));
        registry
    }

    pub fn register(&mut self, experiment: Box<dyn Experiment>) {
        self.experiments.insert(experiment.command(), experiment);
    }

    pub fn run(&self, job: &Arc<Job>) -> Result<Outcome> {
        let experiment = self
            .experiments
            .get(&job.command)
            .ok_or_else(|| OslabError::InvalidParameter(format!("no experiment registered for `{}`", job.command)))?;
        let mut outcome = experiment.run(job, self)?;
        for check in &mut outcome.checks {
            if check.replay.is_none() {
                check.replay = Some(Arc::clone(job));
            }
        }
        Ok(outcome)
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.into_inner().map_err(|e| OslabError::Io(e.into_error()))
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    text.into_bytes()
}

/// `|a − b| / |b|`, exact zero when both vanish.
fn relative(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / b.abs().max(f64::MIN_POSITIVE)
    }
}

struct DerivativeExperiment;

impl Experiment for DerivativeExperiment {
    fn command(&self) -> Command {
        Command::Derivative
    }

    fn run(&self, job: &Arc<Job>, _: &ExperimentRegistry) -> Result<Outcome> {
        let f = job.function("exp")?;
        let (h, v) = job.pair()?;
        let order = job.order.unwrap_or(2);
        let cases: Vec<(usize, f64)> = (1..=order).flat_map(|k| job.grids.s.iter().map(move |&s| (k, s))).collect();
        let results = cases
            .par_iter()
            .map(|&(k, s)| {
                let d = operator_derivative(f.as_ref(), h, v, k, s)?;
                let step = if v.operator_norm() > 0.0 { default_step(k, v) } else { 1.0 };
                let oracle = finite_difference_oracle(f.as_ref(), h, v, k, s, step)?;
                let diff = max_abs(&(&d - &oracle));
                let err = if diff == 0.0 { 0.0 } else { diff / max_abs(&oracle).max(f64::MIN_POSITIVE) };
                Ok((d, err))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Outcome::default();
        let mut rows = Vec::new();
        for (&(k, s), (d, err)) in cases.iter().zip(&results) {
            rows.push(vec![k.to_string(), fmt_f64(s), fmt_f64(*err), fmt_f64(max_abs(d))]);
            out.check(Check::at_most(format!("derivative_k{k}_s{}", fmt_f64(s)), *err, job.tolerances.derivative));
        }
        out.artifact("derivative.csv", csv_bytes(&["k", "s", "rel_error", "max_abs"], &rows)?);
        let (top, _) = &results[results.len() - job.grids.s.len()];
        out.artifact(format!("derivative_k{order}.json"), matrix_to_json(top).into_bytes());

        // the sign rule needs f^(n) >= 0 on the spectral hull; other symbols get values only
        let (psi, verdict) = match derivative_trace_verdict(f.as_ref(), h, v, order, &job.grids.s) {
            Ok((psi, verdict)) => (psi, Some(verdict)),
            Err(OslabError::InvalidParameter(_)) => (
                job.grids
                    .s
                    .par_iter()
                    .map(|&s| derivative_trace(f.as_ref(), h, v, order, s))
                    .collect::<Result<Vec<_>>>()?,
                None,
            ),
            Err(e) => return Err(e),
        };
        let rows: Vec<Vec<String>> = job.grids.s.iter().zip(&psi).map(|(&s, &p)| vec![fmt_f64(s), fmt_f64(p)]).collect();
        out.artifact("psi.csv", csv_bytes(&["s", "psi"], &rows)?);
        if let Some(verdict) = verdict {
            out.check(Check::new(format!("psi_sign_n{order}"), verdict.margin, verdict.tol, verdict.pass));
        }
        Ok(out)
    }
}

struct RemainderExperiment;

impl Experiment for RemainderExperiment {
    fn command(&self) -> Command {
        Command::Remainder
    }

    fn run(&self, job: &Arc<Job>, _: &ExperimentRegistry) -> Result<Outcome> {
        let f = job.function("exp")?;
        let (h, v) = job.pair()?;
        let n = job.order.unwrap_or(2);
        let direct = taylor_remainder_trace(f.as_ref(), h, v, n)?;
        let perturbation = if n == 1 {
            trace(&birman_solomyak_difference(f.as_ref(), h, v)?)
        } else {
            trace(&taylor_remainder_via_perturbation(f.as_ref(), h, v, n)?)
        };
        let integral = remainder_trace_integral(f.as_ref(), h, v, n, job.tolerances.quadrature)?;
        let tol = job.tolerances.remainder.max(job.tolerances.quadrature);
        let scale = direct.abs().max(1.0);
        let mut out = Outcome::default();
        out.check(Check::at_most("direct_vs_perturbation", (direct - perturbation).abs() / scale, tol));
        out.check(Check::at_most("direct_vs_integral", (direct - integral.value).abs() / scale, tol));
        out.check(Check::at_most("perturbation_vs_integral", (perturbation - integral.value).abs() / scale, tol));

        // perturbation formula between H and H + V with interior bases H + V/2
        let mid = h.add_scaled(v, 0.5)?;
        let hv = h.add_scaled(v, 1.0)?;
        let bases = vec![mid; n - 1];
        let perturbations = vec![v.matrix().clone(); n - 1];
        let identity = perturbation_identity_residual(f.as_ref(), n, h, &hv, 1, &bases, &perturbations)?;
        out.check(Check::at_most("perturbation_identity", identity.relative(), job.tolerances.identity));

        let rows = vec![
            vec!["direct".into(), fmt_f64(direct)],
            vec!["perturbation".into(), fmt_f64(perturbation)],
            vec!["integral".into(), fmt_f64(integral.value)],
            vec!["integral_order".into(), integral.order.to_string()],
            vec!["integral_increment".into(), fmt_f64(integral.increment)],
            vec!["identity_residual".into(), fmt_f64(identity.residual)],
            vec!["identity_scale".into(), fmt_f64(identity.scale)],
        ];
        out.artifact("remainder.csv", csv_bytes(&["quantity", "value"], &rows)?);
        Ok(out)
    }
}

struct SsfExperiment;

impl Experiment for SsfExperiment {
    fn command(&self) -> Command {
        Command::Ssf
    }

    fn run(&self, job: &Arc<Job>, _: &ExperimentRegistry) -> Result<Outcome> {
        let f = job.function("exp")?;
        let (h, v) = job.pair()?;
        let n = job.order.unwrap_or(2);
        let est = ssf_density(h, v, n, job.grids.lambda_points)?;
        let mass = ssf_mass(v, n);
        let remainder = taylor_remainder_trace(f.as_ref(), h, v, n)?;
        let via_grid = est.integrate(|x| f.eval(x, n));
        let via_moments = trace_formula_via_moments(f.as_ref(), h, v, n)?;
        let sign = PerturbationSign::classify(v);
        let verdict = positivity_verdict(&est, sign);

        let mut out = Outcome::default();
        out.check(Check::at_most("mass", relative(est.mass(), mass), job.tolerances.mass));
        out.check(Check::new("positivity", verdict.margin, verdict.tol, verdict.pass));
        out.check(Check::at_most("closure_grid", relative(via_grid, remainder), job.tolerances.closure_grid));
        out.check(Check::at_most(
            "closure_moment",
            relative(via_moments.value, remainder),
            job.tolerances.closure_moment,
        ));

        let mut csv = Vec::new();
        est.write_csv(job.seed, &mut csv)?;
        out.artifact("ssf.csv", csv);
        out.artifact(
            "ssf_summary.json",
            json_bytes(&json!({
                "order": n,
                "perturbation_sign": format!("{sign:?}"),
                "hull": [fmt_f64(est.hull.lo), fmt_f64(est.hull.hi)],
                "mass_expected": fmt_f64(mass),
                "mass_grid": fmt_f64(est.mass()),
                "trace_remainder": fmt_f64(remainder),
                "trace_via_grid": fmt_f64(via_grid),
                "trace_via_moments": fmt_f64(via_moments.value),
                "chebyshev_degree": via_moments.degree,
                "observed_sign": format!("{:?}", est.verdict),
            })),
        );
        Ok(out)
    }
}

fn cm_checks(out: &mut Outcome, prefix: &str, report: &CmReport) {
    let worst = |rows: &[crate::bmv::OrderMin]| {
        rows.iter()
            .map(|r| r.min_signed / r.max_abs.max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
    };
    out.check(Check::new(
        format!("{prefix}_cm_derivatives"),
        worst(&report.derivative_sign_table),
        crate::bmv::CM_TOL,
        report.derivatives_pass,
    ));
    out.check(Check::new(
        format!("{prefix}_cm_differences"),
        worst(&report.diff_table),
        crate::bmv::CM_TOL,
        report.differences_pass,
    ));
    let hankel = (0..2)
        .map(|i| report.hankel_min_eigs[i] / report.hankel_norms[i].max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    out.check(Check::new(
        format!("{prefix}_cm_hankel"),
        hankel,
        crate::bmv::HANKEL_TOL,
        report.hankel_pass,
    ));
}

fn fit_checks(out: &mut Outcome, prefix: &str, fit: &FitReport, tol: f64) {
    out.check(Check::at_most(format!("{prefix}_fit_residual"), fit.residual_rel, tol));
    let min_weight = fit.pair.atoms.iter().map(|a| a.w).fold(0.0, f64::min);
    out.check(Check::new(format!("{prefix}_weights_nonnegative"), min_weight, 0.0, min_weight >= 0.0));
}

fn csv_of(report: &CmReport) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    report.write_csv(&mut bytes)?;
    Ok(bytes)
}

struct BmvExperiment;

impl Experiment for BmvExperiment {
    fn command(&self) -> Command {
        Command::Bmv
    }

    fn run(&self, job: &Arc<Job>, _: &ExperimentRegistry) -> Result<Outcome> {
        let (h, v) = job.pair()?;
        let t = job.grids.t;
        let grid = log_grid(t.lo, t.hi, t.count);
        let dictionary = DictionarySpec::default();
        let lambda = h.min_eigenvalue() - job.bmv.lambda_offset;
        let cases = heat_and_resolvent_cases(h, v, &grid, lambda, job.bmv.r, dictionary)?;
        let resolvent = ResolventPower::new(job.bmv.r, lambda)?;
        let options = CmOptions::default();
        let heat_cm = cm_check(&DerivativeTrace { f: &NegExpDecay, h, v, n: 1, sign: 1.0 }, options, &grid)?;
        let resolvent_cm = cm_check(&DerivativeTrace { f: &resolvent, h, v, n: 1, sign: 1.0 }, options, &grid)?;

        let mut out = Outcome::default();
        for (name, fit, cm) in [("heat", &cases.heat, &heat_cm), ("resolvent", &cases.resolvent, &resolvent_cm)] {
            cm_checks(&mut out, name, cm);
            fit_checks(&mut out, name, fit, job.tolerances.fit_residual);
            out.check(Check::new(format!("{name}_drift_nonpositive"), fit.pair.b, 0.0, fit.pair.b <= 0.0));
            out.artifact(format!("bmv_{name}.json"), json_bytes(&fit.to_json()));
            out.artifact(format!("cm_{name}.csv"), csv_of(cm)?);
        }

        // derivative traces of −e^{−x} and the time-dependent remainder
        for n in 1..=job.order.unwrap_or(3) {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let psi = grid
                .par_iter()
                .map(|&t| derivative_trace(&NegExpDecay, h, v, n, t))
                .collect::<Result<Vec<_>>>()?;
            let fit = cm_fit(&grid, &psi, sign, dictionary)?;
            fit_checks(&mut out, &format!("psi_n{n}"), &fit, job.tolerances.fit_residual);
            out.artifact(format!("cm_fit_n{n}.json"), json_bytes(&fit.to_json()));
        }
        let (report, fit) = remainder_laplace_check(&NegExpDecay, h, v, 2, &grid, options, dictionary)?;
        cm_checks(&mut out, "remainder_n2", &report);
        fit_checks(&mut out, "remainder_n2", &fit, job.tolerances.fit_residual);
        out.artifact("cm_remainder_n2.csv", csv_of(&report)?);
        out.artifact("laplace_remainder_n2.json", json_bytes(&fit.to_json()));
        Ok(out)
    }
}

fn study_bytes(study: &ConvergenceStudy) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    study.write_csv(&mut bytes)?;
    Ok(bytes)
}

struct TruncationExperiment;

impl Experiment for TruncationExperiment {
    fn command(&self) -> Command {
        Command::Truncation
    }

    fn run(&self, job: &Arc<Job>, _: &ExperimentRegistry) -> Result<Outcome> {
        let Instance::Model { model, .. } = &job.instance else {
            return Err(OslabError::InvalidParameter("truncation needs a diagonal model instance".into()));
        };
        let f = job.function("neg_exp_decay")?;
        let p_list = &job.grids.p_list;
        let mut out = Outcome::default();
        for n in 1..=job.order.unwrap_or(2) {
            let study = ssf_convergence_study(model, n, p_list, job.grids.lambda_points)?;
            out.check(Check::new(
                format!("ssf_n{n}_strictly_decreasing"),
                study.rows.len() as f64,
                0.0,
                study.strictly_decreasing(),
            ));
            out.check(Check::at_most(
                format!("ssf_n{n}_final_error"),
                study.final_relative_error(),
                job.tolerances.truncation,
            ));
            out.check(Check::new(format!("ssf_n{n}_positivity"), 0.0, 0.0, study.verdicts_pass()));
            out.artifact(format!("truncation_ssf_n{n}.csv"), study_bytes(&study)?);

            let psi = derivative_trace_truncation_study(model, f.as_ref(), n, p_list, &job.grids.s)?;
            out.check(Check::new(format!("psi_n{n}_sign"), 0.0, 0.0, psi.verdicts_pass()));
            let slack = 1e-6 * psi.scale;
            out.check(Check::new(format!("psi_n{n}_cauchy"), slack, slack, psi.nonincreasing(slack)));
            out.artifact(format!("truncation_psi_n{n}.csv"), study_bytes(&psi)?);
        }
        Ok(out)
    }
}

/// Seeded fixture suite touching every command.
struct VerifyAll;

impl Experiment for VerifyAll {
    fn command(&self) -> Command {
        Command::VerifyAll
    }

    fn run(&self, job: &Arc<Job>, registry: &ExperimentRegistry) -> Result<Outcome> {
        let mut jobs = Vec::new();
        for i in 0..job.suite.instances {
            let seed = derived_seed(job.seed, i as u64);
            let (h, v) = crate::instance::random_goe(4, seed)?;
            let pair = Instance::Pair { h, v };

            let mut d = job.child(format!("derivative_{i}"), Command::Derivative, seed, pair.clone());
            d.order = Some(3);
            d.grids.s = vec![0.0, 0.5];
            jobs.push(d);

            let mut r = job.child(format!("remainder_{i}"), Command::Remainder, seed, pair);
            r.order = Some(3);
            jobs.push(r);

            let (h, v) = crate::instance::random_psd_pair(4, seed)?;
            let mut s = job.child(format!("ssf_{i}"), Command::Ssf, seed, Instance::Pair { h, v });
            s.order = Some(2 + i % 2);
            jobs.push(s);

            let (h, v) = crate::instance::random_psd_pair(3, seed)?;
            let mut b = job.child(format!("bmv_{i}"), Command::Bmv, seed, Instance::Pair { h, v });
            b.order = Some(2);
            jobs.push(b);
        }
        let model = DiagonalModel::fixture(32, job.seed);
        let (h, v) = model.assemble()?;
        let mut t = job.child("truncation".into(), Command::Truncation, job.seed, Instance::Model { model, h, v });
        t.grids.lambda_points = 1024;
        t.grids.p_list = vec![4, 8, 16, 32];
        jobs.push(t);

        let jobs: Vec<Arc<Job>> = jobs.into_iter().map(Arc::new).collect();
        let outcomes = jobs.par_iter().map(|j| registry.run(j)).collect::<Result<Vec<_>>>()?;

        let mut out = Outcome::default();
        let mut rows = Vec::new();
        for (j, outcome) in jobs.iter().zip(outcomes) {
            for (path, bytes) in outcome.artifacts {
                out.artifact(format!("{}/{path}", j.label), bytes);
            }
            for mut check in outcome.checks {
                check.name = format!("{}/{}", j.label, check.name);
                rows.push(vec![
                    check.name.clone(),
                    fmt_f64(check.value),
                    fmt_f64(check.tolerance),
                    check.pass.to_string(),
                ]);
                out.check(check);
            }
        }
        out.artifact("checks.csv", csv_bytes(&["check", "value", "tolerance", "pass"], &rows)?);
        Ok(out)
    }
}
