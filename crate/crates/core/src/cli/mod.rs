//! Config-driven experiment runner.
//!
//! Exit codes: 0 when every asserted verdict passes, 1 when a verdict fails
//! (failing instances are written to `<out>/replay/<job>/`), 2 for usage and
//! configuration errors.

pub mod config;
pub mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

pub use config::{Command, ConfigError, ExperimentConfig, InstanceSpec};
pub use experiments::{Check, Experiment, ExperimentRegistry, Instance, Job, Outcome};

use crate::error::OslabError;
use crate::instance::{random_goe, random_psd_pair};
use crate::io::{fmt_f64, read_matrix};
use crate::spectral::SymmetricOperator;
use crate::truncation::DiagonalModel;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// Builds the instance and resolves seeds. Relative file paths are taken
/// from `base`.
pub fn resolve_job(config: &ExperimentConfig, base: &Path, seed_override: Option<u64>) -> Result<Job, ConfigError> {
    config.validate()?;
    let spec_seed = config.instance.as_ref().and_then(InstanceSpec::seed);
    let seed = seed_override.or(spec_seed).or(config.seed);
    let require_seed = |kind: &str| {
        seed.ok_or_else(|| ConfigError(format!("config field `instance.seed`: required for `{kind}` instances")))
    };
    let generated = |e: OslabError| ConfigError(format!("config field `instance`: {e}"));
    let (instance, seed) = match &config.instance {
        None => {
            let seed = seed.ok_or_else(|| ConfigError("config field `seed`: required for `verify-all`".into()))?;
            (Instance::Suite, seed)
        }
        Some(InstanceSpec::RandomGoe { dim, .. }) => {
            let seed = require_seed("random_goe")?;
            let (h, v) = random_goe(*dim, seed).map_err(generated)?;
            (Instance::Pair { h, v }, seed)
        }
        Some(InstanceSpec::RandomPsdPair { dim, negate, .. }) => {
            let seed = require_seed("random_psd_pair")?;
            let (h, v) = random_psd_pair(*dim, seed).map_err(generated)?;
            let v = if *negate { v.scaled(-1.0) } else { v };
            (Instance::Pair { h, v }, seed)
        }
        Some(InstanceSpec::DiagonalModel {
            m,
            gamma,
            c,
            rho,
            psd,
            size,
            ..
        }) => {
            let seed = require_seed("diagonal_model")?;
            let model = DiagonalModel {
                m: *m,
                gamma: *gamma,
                c: *c,
                rho: *rho,
                psd: *psd,
                size: *size,
                seed,
            };
            let (h, v) = model.assemble().map_err(generated)?;
            (Instance::Model { model, h, v }, seed)
        }
        Some(InstanceSpec::File { h, v }) => {
            let load = |field: &str, path: &Path| -> Result<SymmetricOperator, ConfigError> {
                let full = base.join(path);
                if !full.is_file() {
                    return Err(ConfigError(format!(
                        "config field `instance.{field}`: file {} does not exist",
                        full.display()
                    )));
                }
                read_matrix(&full)
                    .and_then(SymmetricOperator::new)
                    .map_err(|e| ConfigError(format!("config field `instance.{field}`: {}: {e}", full.display())))
            };
            let (h, v) = (load("h", h)?, load("v", v)?);
            if h.dim() != v.dim() {
                return Err(ConfigError(format!(
                    "config field `instance`: H is {0}x{0} but V is {1}x{1}",
                    h.dim(),
                    v.dim()
                )));
            }
            (Instance::Pair { h, v }, seed.unwrap_or(0))
        }
    };
    Ok(Job {
        label: config.command.name().to_string(),
        command: config.command,
        seed,
        instance,
        function: config.function.clone(),
        order: config.order,
        grids: config.grids.clone(),
        tolerances: config.tolerances,
        bmv: config.bmv,
        suite: config.suite,
    })
}

/// Errors of the library that indicate a bad request rather than a failed
/// verdict.
fn is_usage_error(e: &OslabError) -> bool {
    !matches!(e, OslabError::NnlsNotConverged { .. } | OslabError::QuadratureNotConverged { .. })
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    for (path, bytes) in files {
        let full = dir.join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(full, bytes)?;
    }
    Ok(())
}

fn summary(job: &Job, checks: &[Check], error: Option<&str>) -> Vec<u8> {
    let rows: Vec<_> = checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": fmt_f64(c.value),
                "tolerance": fmt_f64(c.tolerance),
                "pass": c.pass,
            })
        })
        .collect();
    let pass = error.is_none() && checks.iter().all(|c| c.pass);
    let mut text = serde_json::to_string_pretty(&json!({
        "command": job.command.name(),
        "seed": job.seed,
        "pass": pass,
        "error": error,
        "checks": rows,
    }))
    .expect("summary serializes");
    text.push('\n');
    text.into_bytes()
}

/// Runs a resolved job, writes artifacts under `out` and returns the exit
/// code.
pub fn execute(job: Job, out: &Path, registry: &ExperimentRegistry) -> i32 {
    let job = Arc::new(job);
    let result = registry.run(&job);
    let io_failure = |e: std::io::Error| {
        eprintln!("error: writing to {}: {e}", out.display());
        EXIT_USAGE
    };
    match result {
        Ok(outcome) => {
            let mut files = outcome.artifacts;
            files.push(("summary.json".into(), summary(&job, &outcome.checks, None)));
            let mut replays: Vec<&Arc<Job>> = Vec::new();
            for check in outcome.checks.iter().filter(|c| !c.pass) {
                eprintln!(
                    "FAIL {}: value {} against tolerance {}",
                    check.name,
                    fmt_f64(check.value),
                    fmt_f64(check.tolerance)
                );
                if let Some(r) = &check.replay {
                    if !replays.iter().any(|x| Arc::ptr_eq(x, r)) {
                        replays.push(r);
                    }
                }
            }
            for r in &replays {
                for (name, bytes) in r.replay_files() {
                    files.push((format!("replay/{}/{name}", r.label), bytes));
                }
            }
            if let Err(e) = write_files(out, &files) {
                return io_failure(e);
            }
            if outcome.checks.iter().all(|c| c.pass) {
                eprintln!("{}: {} checks passed", job.command, outcome.checks.len());
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) if is_usage_error(&e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("FAIL {}: {e}", job.label);
            let mut files = vec![("summary.json".to_string(), summary(&job, &[], Some(&e.to_string())))];
            for (name, bytes) in job.replay_files() {
                files.push((format!("replay/{}/{name}", job.label), bytes));
            }
            if let Err(e) = write_files(out, &files) {
                return io_failure(e);
            }
            EXIT_FAIL
        }
    }
}

/// `oslab <command> --config <path>`: loads, checks that the config names
/// the same command, runs on a pool of `jobs` threads.
pub fn run(command: Command, config_path: &Path, overrides: &Overrides) -> i32 {
    let loaded = ExperimentConfig::load(config_path).and_then(|(config, base)| {
        if config.command != command {
            return Err(ConfigError(format!(
                "config field `command`: file says `{}` but `{command}` was requested",
                config.command
            )));
        }
        let job = resolve_job(&config, &base, overrides.seed)?;
        Ok((config, job))
    });
    let (config, job) = match loaded {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let out = overrides
        .out
        .clone()
        .or(config.output)
        .unwrap_or_else(|| PathBuf::from("oslab-out").join(command.name()));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = overrides.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let registry = ExperimentRegistry::with_builtins();
    pool.install(|| execute(job, &out, &registry))
}
