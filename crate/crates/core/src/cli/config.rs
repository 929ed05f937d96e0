//! Versioned JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::functions::FunctionSpec;
use crate::truncation::DiagonalModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Derivative,
    Remainder,
    Ssf,
    Bmv,
    Truncation,
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Derivative => "derivative",
            Command::Remainder => "remainder",
            Command::Ssf => "ssf",
            Command::Bmv => "bmv",
            Command::Truncation => "truncation",
            Command::VerifyAll => "verify-all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    RandomGoe {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    RandomPsdPair {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        /// Use `−V` instead.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        negate: bool,
    },
    DiagonalModel {
        m: f64,
        gamma: f64,
        c: f64,
        rho: f64,
        #[serde(default = "default_true")]
        psd: bool,
        size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Paths are relative to the directory of the config file.
    File { h: PathBuf, v: PathBuf },
}

fn default_true() -> bool {
    true
}

impl InstanceSpec {
    pub fn from_model(model: &DiagonalModel) -> Self {
        InstanceSpec::DiagonalModel {
            m: model.m,
            gamma: model.gamma,
            c: model.c,
            rho: model.rho,
            psd: model.psd,
            size: model.size,
            seed: Some(model.seed),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            InstanceSpec::RandomGoe { seed, .. }
            | InstanceSpec::RandomPsdPair { seed, .. }
            | InstanceSpec::DiagonalModel { seed, .. } => *seed,
            InstanceSpec::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Log-spaced times of the complete monotonicity checks and fits.
    #[serde(default = "Grids::default_t")]
    pub t: LogGridSpec,
    /// Points of the spectral shift density grid.
    #[serde(default = "Grids::default_lambda")]
    pub lambda_points: usize,
    /// Parameter values for derivatives and derivative traces.
    #[serde(default = "Grids::default_s")]
    pub s: Vec<f64>,
    /// Truncation sizes; the last is the reference.
    #[serde(default = "Grids::default_p_list")]
    pub p_list: Vec<usize>,
}

impl Grids {
    fn default_t() -> LogGridSpec {
        LogGridSpec {
            lo: 0.01,
            hi: 10.0,
            count: 64,
        }
    }

    fn default_lambda() -> usize {
        2001
    }

    fn default_s() -> Vec<f64> {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    }

    fn default_p_list() -> Vec<usize> {
        vec![4, 8, 16, 32]
    }
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            t: Self::default_t(),
            lambda_points: Self::default_lambda(),
            s: Self::default_s(),
            p_list: Self::default_p_list(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Derivative against the finite-difference oracle, relative max-norm.
    pub derivative: f64,
    /// Agreement of the remainder forms, relative to `max(1, |value|)`.
    pub remainder: f64,
    /// Gauss–Legendre stopping increment.
    pub quadrature: f64,
    /// Trace formula through the density grid, relative.
    pub closure_grid: f64,
    /// Trace formula through moments, relative.
    pub closure_moment: f64,
    /// Density mass against `Tr(Vⁿ)/n!`, relative.
    pub mass: f64,
    /// Relative residual of measure fits.
    pub fit_residual: f64,
    /// Truncation error at the second-largest `p` over the reference mass.
    pub truncation: f64,
    /// Perturbation-identity residual over its scale.
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            derivative: 1e-6,
            remainder: 1e-8,
            quadrature: 1e-8,
            closure_grid: 1e-3,
            closure_moment: 1e-6,
            mass: 1e-6,
            fit_residual: 1e-4,
            truncation: 1e-3,
            identity: 1e-8,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("derivative", self.derivative),
            ("remainder", self.remainder),
            ("quadrature", self.quadrature),
            ("closure_grid", self.closure_grid),
            ("closure_moment", self.closure_moment),
            ("mass", self.mass),
            ("fit_residual", self.fit_residual),
            ("truncation", self.truncation),
            ("identity", self.identity),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BmvParams {
    /// `λ = λ_min(H) − lambda_offset` for the resolvent case.
    pub lambda_offset: f64,
    pub r: f64,
}

impl Default for BmvParams {
    fn default() -> Self {
        Self {
            lambda_offset: 1.0,
            r: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteParams {
    /// Seeded instances per random check family.
    pub instances: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self { instances: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub command: Command,
    /// Base seed; instance seeds take precedence, `--seed` overrides both.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bmv: BmvParams,
    #[serde(default)]
    pub suite: SuiteParams,
    /// Output directory, relative to the working directory; `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Usage and configuration problems (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command,
            seed: None,
            instance: None,
            function: None,
            order: None,
            grids: Grids::default(),
            tolerances: Tolerances::default(),
            bmv: BmvParams::default(),
            suite: SuiteParams::default(),
            output: None,
        }
    }

    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                ConfigError(format!("config: {}", e.into_inner()))
            } else {
                ConfigError(format!("config field `{path}`: {}", e.into_inner()))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let config = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "config field `schema`: unsupported version {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        for (name, value) in self.tolerances.entries() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError(format!("config field `tolerances.{name}`: must be positive, got {value}")));
            }
        }
        if self.order == Some(0) {
            return Err(ConfigError("config field `order`: must be at least 1".into()));
        }
        let t = self.grids.t;
        if !(t.lo > 0.0 && t.hi > t.lo && t.count >= 2) {
            return Err(ConfigError(format!(
                "config field `grids.t`: need 0 < lo < hi and count >= 2, got {t:?}"
            )));
        }
        if self.grids.s.is_empty() || self.grids.s.iter().any(|s| !s.is_finite()) {
            return Err(ConfigError("config field `grids.s`: need at least one finite value".into()));
        }
        if !(self.bmv.lambda_offset > 0.0 && self.bmv.r >= 1.0) {
            return Err(ConfigError(format!(
                "config field `bmv`: need lambda_offset > 0 and r >= 1, got {:?}",
                self.bmv
            )));
        }
        if self.command != Command::VerifyAll && self.instance.is_none() {
            return Err(ConfigError(format!("config field `instance`: required for `{}`", self.command)));
        }
        if self.command == Command::Truncation && !matches!(self.instance, Some(InstanceSpec::DiagonalModel { .. })) {
            return Err(ConfigError("config field `instance.kind`: truncation needs `diagonal_model`".into()));
        }
        Ok(())
    }
}
