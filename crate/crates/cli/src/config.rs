//! Run configuration shared by the command-line flags and TOML config files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use eulerlab_core::verifier::Thresholds;
use eulerlab_core::{GridSpec, IntegratorOptions, ModelParams, SeedData, YEquation};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Classify,
    Integrate,
    Field,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// `lo:hi:n` with `n >= 1` evenly spaced values, or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RangeRepr", into = "String")]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RangeRepr {
    Value(f64),
    Text(String),
}

impl TryFrom<RangeRepr> for RangeSpec {
    type Error = String;

    fn try_from(r: RangeRepr) -> Result<Self, Self::Error> {
        match r {
            RangeRepr::Value(v) => RangeSpec::single(v),
            RangeRepr::Text(s) => s.parse(),
        }
    }
}

impl From<RangeSpec> for String {
    fn from(r: RangeSpec) -> String {
        r.to_string()
    }
}

impl fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

impl RangeSpec {
    pub fn single(v: f64) -> Result<Self, String> {
        if !v.is_finite() {
            return Err(format!("range value {v} is not finite"));
        }
        Ok(Self { lo: v, hi: v, n: 1 })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.hi } else { self.lo + (self.hi - self.lo) * (i as f64 / last) })
            .collect()
    }
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("bad number `{p}` in range `{s}`: {e}"));
        match parts.as_slice() {
            [v] => RangeSpec::single(num(v)?),
            [lo, hi, n] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                let n: usize = n.trim().parse().map_err(|e| format!("bad count in range `{s}`: {e}"))?;
                if n == 0 {
                    return Err(format!("range `{s}` is empty"));
                }
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(format!("range `{s}` needs finite lo <= hi"));
                }
                if n == 1 && lo != hi {
                    return Err(format!("range `{s}` has one point but lo != hi"));
                }
                Ok(Self { lo, hi, n })
            }
            _ => Err(format!("range `{s}` is not `value` or `lo:hi:n`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub a0: f64,
    pub a1: f64,
    pub xi: f64,
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub b1: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "K", default = "one")]
    pub k: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub mu: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self { k: 1.0, gamma: None, mu: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub xi: RangeSpec,
    pub a0: RangeSpec,
    pub a1: RangeSpec,
    /// Falls back to `params.gamma` when absent.
    #[serde(default)]
    pub gamma: Option<RangeSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: default_rtol(), atol: default_atol(), quad_tol: default_quad_tol() }
    }
}

fn one() -> f64 {
    1.0
}

fn default_rtol() -> f64 {
    eulerlab_core::ode::DEFAULT_RTOL
}

fn default_atol() -> f64 {
    eulerlab_core::ode::DEFAULT_ATOL
}

fn default_quad_tol() -> f64 {
    1e-12
}

fn default_threshold() -> f64 {
    Thresholds::default().max_residual
}

/// Everything one invocation needs. Sections not used by `command` must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub seed: Option<SeedSection>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub y_equation: YEquation,
    /// Integration horizon for `integrate`.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Half-line form `r >= 0` for `field`.
    #[serde(default)]
    pub radial: bool,
    /// Largest residual max-norm accepted by `verify`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            seed: None,
            params: ParamsSection::default(),
            grid: None,
            sweep: None,
            output: OutputSection::default(),
            tolerances: Tolerances::default(),
            y_equation: YEquation::default(),
            t_end: None,
            radial: false,
            threshold: default_threshold(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that the sections match the command and resolves them into a [`Job`].
    pub fn plan(&self) -> Result<Job, CliError> {
        use CommandKind::*;
        let bad = |m: String| Err(CliError::Config(m));
        let cmd = self.command;
        let allowed = |present: bool, name: &str, used_by: &[CommandKind]| -> Result<(), CliError> {
            if present && !used_by.contains(&cmd) {
                return Err(CliError::Config(format!("`{name}` is not used by the {cmd:?} command")));
            }
            Ok(())
        };
        allowed(self.seed.is_some(), "seed", &[Classify, Integrate, Field, Verify])?;
        allowed(self.grid.is_some(), "grid", &[Field, Verify])?;
        allowed(self.sweep.is_some(), "sweep", &[Sweep])?;
        allowed(self.t_end.is_some(), "t_end", &[Integrate])?;
        allowed(self.radial, "radial", &[Field])?;

        let tol = self.tolerances;
        if !(tol.quad_tol > 0.0 && tol.quad_tol.is_finite()) {
            return bad(format!("quad_tol must be positive, got {}", tol.quad_tol));
        }
        let opts =
            IntegratorOptions { y_equation: self.y_equation, ..IntegratorOptions::with_tolerances(tol.rtol, tol.atol) };
        if !(opts.rtol > 0.0 && opts.rtol < 1.0 && opts.atol > 0.0) {
            return bad(format!("invalid tolerances rtol={} atol={}", opts.rtol, opts.atol));
        }
        let format = self.output.format.unwrap_or(match cmd {
            Classify | Verify => Format::Json,
            _ => Format::Csv,
        });
        if cmd == Verify && format == Format::Csv {
            return bad("verify writes a JSON report only".into());
        }
        let common = Common { opts, quad_tol: tol.quad_tol, format, output: self.output.path.clone() };

        let params_for = |gamma: f64| {
            ModelParams::with_viscosity(self.params.k, gamma, self.params.mu)
                .map_err(|e| CliError::Config(e.to_string()))
        };
        let seed_and_params = || -> Result<(SeedData, ModelParams), CliError> {
            let s = self.seed.ok_or_else(|| CliError::Config(format!("the {cmd:?} command needs a seed")))?;
            let gamma = self.params.gamma.ok_or_else(|| CliError::Config("gamma is required".into()))?;
            let seed =
                SeedData::new(s.a0, s.a1, s.xi, s.b0, s.b1, s.alpha).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((seed, params_for(gamma)?))
        };
        let grid = || -> Result<GridSpec, CliError> {
            let g = self.grid.ok_or_else(|| CliError::Config(format!("the {cmd:?} command needs a grid")))?;
            g.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if g.t_lo < 0.0 {
                return Err(CliError::Config(format!("grid starts before t = 0 ({})", g.t_lo)));
            }
            Ok(g)
        };

        let task = match cmd {
            Classify => {
                let (seed, params) = seed_and_params()?;
                Task::Classify { seed, params }
            }
            Integrate => {
                let (seed, params) = seed_and_params()?;
                let t_end = self.t_end.ok_or_else(|| CliError::Config("integrate needs t_end".into()))?;
                if !(t_end > 0.0 && t_end.is_finite()) {
                    return bad(format!("t_end must be positive, got {t_end}"));
                }
                Task::Integrate { seed, params, t_end }
            }
            Field => {
                let (seed, params) = seed_and_params()?;
                Task::Field { seed, params, grid: grid()?, radial: self.radial }
            }
            Verify => {
                let (seed, params) = seed_and_params()?;
                if !(self.threshold > 0.0) {
                    return bad(format!("threshold must be positive, got {}", self.threshold));
                }
                Task::Verify { seed, params, grid: grid()?, thresholds: Thresholds { max_residual: self.threshold } }
            }
            Sweep => {
                let s = self.sweep.ok_or_else(|| CliError::Config("sweep needs a sweep section".into()))?;
                let gamma = match (s.gamma, self.params.gamma) {
                    (Some(r), _) => r,
                    (None, Some(g)) => RangeSpec::single(g).map_err(CliError::Config)?,
                    (None, None) => return bad("sweep needs a gamma range or params.gamma".into()),
                };
                for g in gamma.values() {
                    params_for(g)?;
                }
                for a0 in s.a0.values() {
                    if !(a0 > 0.0) {
                        return bad(format!("a0 range includes non-positive value {a0}"));
                    }
                }
                Task::Sweep { xi: s.xi, a0: s.a0, a1: s.a1, gamma, k: self.params.k, mu: self.params.mu }
            }
        };
        Ok(Job { task, common })
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub opts: IntegratorOptions,
    pub quad_tol: f64,
    pub format: Format,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Classify { seed: SeedData, params: ModelParams },
    Integrate { seed: SeedData, params: ModelParams, t_end: f64 },
    Field { seed: SeedData, params: ModelParams, grid: GridSpec, radial: bool },
    Verify { seed: SeedData, params: ModelParams, grid: GridSpec, thresholds: Thresholds },
    Sweep { xi: RangeSpec, a0: RangeSpec, a1: RangeSpec, gamma: RangeSpec, k: f64, mu: f64 },
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task: Task,
    pub common: Common,
}
