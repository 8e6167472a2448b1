//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `target`, `kernel`,
//! `adapt`, `schedule`, `run`, `diagnostics`, `output` and, for the
//! benchmark command, `benchmark`. Unknown keys are rejected at parse time;
//! semantic problems are collected and reported with their key paths.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use airmcmc_core::adapt::{AdaptGate, AdaptRule, CoinSchedule, Region};
use airmcmc_core::kernels::KernelParam;
use airmcmc_core::runner::{KernelFamily, RunSpec};
use airmcmc_core::schedule::{LagKind, LagSchedule};
use airmcmc_core::targets::{
    four_state_target, gaussian_random_cov_target, poly_tail_target, student_t_quantile,
    student_t_target, TargetDensity, TestFunction,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

fn issue(path: &str, message: impl Into<String>) -> Issue {
    Issue {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKindCfg {
    StudentT,
    PolyTail,
    GaussianRandomCov,
    FourState,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKindCfg,
    /// Degrees of freedom of the Student t target.
    pub nu: Option<f64>,
    /// Tail exponent of the polynomial-tail target.
    pub r: Option<f64>,
    pub dim: Option<usize>,
    /// Seed of the random factor `M` in `N(0, M M^T)`.
    pub matrix_seed: Option<u64>,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyCfg {
    Rwm,
    AmMixture,
    FiniteMh,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: FamilyCfg,
    #[serde(default = "default_variance")]
    pub initial_variance: f64,
    #[serde(default = "default_width")]
    pub initial_width: u8,
}

fn default_variance() -> f64 {
    0.01
}

fn default_width() -> u8 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCfg {
    #[default]
    None,
    Scaling,
    CovEstimate,
    AccTarget,
}

/// Commit gate: `kind = "always"`, `"level_set"` with a region `B`, or
/// `"coin"` with a success-probability sequence `p`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GateCfg {
    Always {},
    LevelSet {
        #[serde(rename = "B")]
        b: RegionCfg,
    },
    Coin {
        p: CoinCfg,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionCfg {
    All {},
    Empty {},
    Ball { radius: f64 },
    DensityAbove { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoinCfg {
    /// `p_j = 1/j`.
    Harmonic {},
    /// `p_j = j^{-a}`.
    Power { a: f64 },
    Constant { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    #[serde(default)]
    pub rule: RuleCfg,
    /// Gain exponent: the scaling gain at epoch `k` is `k^{-s}`.
    #[serde(default = "default_gain")]
    pub s: f64,
    pub target_rate: Option<f64>,
    #[serde(default)]
    pub burnin: u64,
    /// Accept `s >= 1`, whose gains have a finite sum.
    #[serde(default)]
    pub allow_summable_gain: bool,
    #[serde(default)]
    pub gate: GateCfg,
}

fn default_gain() -> f64 {
    0.7
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            rule: RuleCfg::None,
            s: default_gain(),
            target_rate: None,
            burnin: 0,
            allow_summable_gain: false,
            gate: GateCfg::Always {},
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKindCfg {
    Polynomial,
    Randomized,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKindCfg,
    #[serde(default = "default_c")]
    pub c: f64,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub n: Option<u64>,
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    #[serde(default = "default_one")]
    pub replications: u64,
    pub seed: u64,
    /// Worker threads for replications; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub initial_state: Option<Vec<f64>>,
}

fn default_one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// `x`, `x2` or `state:<i>`.
    #[serde(default = "default_function")]
    pub test_function: String,
    pub true_value: Option<f64>,
    #[serde(default = "default_level")]
    pub quantile_level: f64,
    pub true_quantile: Option<f64>,
    #[serde(default = "default_grid_min")]
    pub grid_min: u64,
    #[serde(default = "default_per_decade")]
    pub grid_per_decade: u32,
    /// Closed interval the fitted MSE slope must fall in.
    pub expected_slope: Option<[f64; 2]>,
}

fn default_function() -> String {
    "x".into()
}

fn default_level() -> f64 {
    0.95
}

fn default_grid_min() -> u64 {
    100
}

fn default_per_decade() -> u32 {
    5
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            test_function: default_function(),
            true_value: None,
            quantile_level: default_level(),
            true_quantile: None,
            grid_min: default_grid_min(),
            grid_per_decade: default_per_decade(),
            expected_slope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the `--out-dir` flag takes precedence.
    pub dir: Option<std::path::PathBuf>,
    /// File name prefix; defaults to the config file stem.
    pub prefix: Option<String>,
    #[serde(default = "default_true")]
    pub trace: bool,
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> u64 {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            prefix: None,
            trace: true,
            trace_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub variants: Vec<VariantConfig>,
    /// Timed repetitions per variant; the table reports their total.
    #[serde(default = "default_one")]
    pub repeats: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub benchmark: Option<BenchmarkConfig>,
}

/// A parsed and validated config with the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub name: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    parse(&text, &name)
}

pub fn parse(text: &str, name: &str) -> Result<LoadedConfig, ConfigError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }
    Ok(LoadedConfig {
        config,
        hash: sha256_hex(text.as_bytes()),
        name: name.to_string(),
    })
}

impl ScheduleConfig {
    fn validate(&self, path: &str, issues: &mut Vec<Issue>) {
        let key = |k: &str| format!("{path}.{k}");
        if !(self.c > 0.0) || !self.c.is_finite() {
            issues.push(issue(&key("c"), format!("must be positive, got {}", self.c)));
        }
        match self.kind {
            ScheduleKindCfg::Polynomial | ScheduleKindCfg::Randomized => match self.beta {
                None => issues.push(issue(&key("beta"), "required for this schedule kind")),
                Some(b) if !(b >= 0.0) || !b.is_finite() => {
                    issues.push(issue(&key("beta"), format!("must be >= 0, got {b}")))
                }
                _ => {}
            },
            ScheduleKindCfg::Constant => match self.n {
                None => issues.push(issue(&key("n"), "required for a constant schedule")),
                Some(0) => issues.push(issue(&key("n"), "must be >= 1")),
                _ => {}
            },
        }
        if self.kind == ScheduleKindCfg::Randomized {
            match self.delta {
                None => issues.push(issue(&key("delta"), "required for a randomized schedule")),
                Some(d) if !(d > 0.0 && d < 1.0) => {
                    issues.push(issue(&key("delta"), format!("must lie in (0, 1), got {d}")))
                }
                _ => {}
            }
        }
    }

    pub fn build(&self) -> Result<LagSchedule, Issue> {
        let kind = match self.kind {
            ScheduleKindCfg::Polynomial => LagKind::Polynomial {
                c: self.c,
                beta: self.beta.unwrap_or(1.0),
            },
            ScheduleKindCfg::Randomized => LagKind::Randomized {
                c: self.c,
                beta: self.beta.unwrap_or(1.0),
                delta: self.delta.unwrap_or(0.5),
            },
            ScheduleKindCfg::Constant => LagKind::Constant {
                n: self.n.unwrap_or(1),
            },
        };
        LagSchedule::new(kind).map_err(|e| issue("schedule", e.to_string()))
    }
}

impl ExperimentConfig {
    /// Every semantic problem, each tagged with its key path.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let t = &self.target;
        match t.kind {
            TargetKindCfg::StudentT => match t.nu {
                Some(nu) if nu > 0.0 => {}
                _ => issues.push(issue("target.nu", "student_t needs nu > 0")),
            },
            TargetKindCfg::PolyTail => match t.r {
                Some(r) if r > 0.0 => {}
                _ => issues.push(issue("target.r", "poly_tail needs r > 0")),
            },
            TargetKindCfg::GaussianRandomCov => {
                if !matches!(t.dim, Some(d) if d >= 1) {
                    issues.push(issue("target.dim", "gaussian_random_cov needs dim >= 1"));
                }
            }
            TargetKindCfg::FourState => match t.eps {
                Some(eps) => {
                    if let Err(e) = four_state_target(eps) {
                        issues.push(issue("target.eps", e.to_string()));
                    }
                }
                None => issues.push(issue("target.eps", "four_state needs eps")),
            },
        }

        if !(self.kernel.initial_variance > 0.0) || !self.kernel.initial_variance.is_finite() {
            issues.push(issue("kernel.initial_variance", "must be positive and finite"));
        }
        if !matches!(self.kernel.initial_width, 1 | 2) {
            issues.push(issue("kernel.initial_width", "must be 1 or 2"));
        }

        let a = &self.adapt;
        let s = a.s;
        if !(s > 0.0) || !s.is_finite() {
            issues.push(issue("adapt.s", format!("must be positive, got {s}")));
        } else if s >= 1.0 && !a.allow_summable_gain {
            issues.push(issue(
                "adapt.s",
                format!(
                    "s = {s} >= 1 makes the gains summable, so the scale can stall; \
                     set adapt.allow_summable_gain = true to run anyway"
                ),
            ));
        }
        if let Some(r) = a.target_rate {
            if !(r > 0.0 && r < 1.0) {
                issues.push(issue("adapt.target_rate", format!("must lie in (0, 1), got {r}")));
            }
        }
        match &a.gate {
            GateCfg::LevelSet {
                b: RegionCfg::Ball { radius },
            } if !(*radius > 0.0) => {
                issues.push(issue("adapt.gate.B.radius", "must be positive"))
            }
            GateCfg::LevelSet {
                b: RegionCfg::DensityAbove { level },
            } if level.is_nan() => issues.push(issue("adapt.gate.B.level", "must be a number")),
            GateCfg::Coin { p } => {
                if let Err(e) = p.build().validate() {
                    issues.push(issue("adapt.gate.p", e.to_string()));
                }
            }
            _ => {}
        }

        self.schedule.validate("schedule", &mut issues);

        let r = &self.run;
        if r.iterations == 0 {
            issues.push(issue("run.iterations", "must be >= 1"));
        }
        if r.replications == 0 {
            issues.push(issue("run.replications", "must be >= 1"));
        }
        if let (Some(x0), Some(d)) = (&r.initial_state, self.dim()) {
            if x0.len() != d {
                issues.push(issue(
                    "run.initial_state",
                    format!("has {} entries, target dimension is {d}", x0.len()),
                ));
            }
        }

        let d = &self.diagnostics;
        if !(d.quantile_level > 0.0 && d.quantile_level < 1.0) {
            issues.push(issue("diagnostics.quantile_level", "must lie in (0, 1)"));
        }
        if d.grid_min == 0 || d.grid_min > r.iterations.max(1) {
            issues.push(issue("diagnostics.grid_min", "must lie in 1..=run.iterations"));
        }
        if d.grid_per_decade == 0 {
            issues.push(issue("diagnostics.grid_per_decade", "must be >= 1"));
        }
        if let Err(m) = parse_function(&d.test_function) {
            issues.push(issue("diagnostics.test_function", m));
        }
        if let Some([lo, hi]) = d.expected_slope {
            if !(lo <= hi) {
                issues.push(issue("diagnostics.expected_slope", "needs lower <= upper"));
            }
        }

        if self.output.trace_stride == 0 {
            issues.push(issue("output.trace_stride", "must be >= 1"));
        }

        if let Some(b) = &self.benchmark {
            if b.variants.is_empty() {
                issues.push(issue("benchmark.variants", "needs at least one variant"));
            }
            if b.repeats == 0 {
                issues.push(issue("benchmark.repeats", "must be >= 1"));
            }
            for (i, v) in b.variants.iter().enumerate() {
                v.schedule
                    .validate(&format!("benchmark.variants[{i}].schedule"), &mut issues);
            }
        }

        if issues.is_empty() {
            if let Err(e) = self.spec().and_then(|s| s.validate().map_err(|e| issue("kernel.family", e.to_string()))) {
                issues.push(e);
            }
        }
        issues
    }

    fn dim(&self) -> Option<usize> {
        match self.target.kind {
            TargetKindCfg::GaussianRandomCov => self.target.dim,
            _ => Some(1),
        }
    }

    pub fn build_target(&self) -> Result<TargetDensity<f64>, Issue> {
        let t = &self.target;
        let res = match t.kind {
            TargetKindCfg::StudentT => student_t_target(t.nu.unwrap_or(0.0)),
            TargetKindCfg::PolyTail => poly_tail_target(t.r.unwrap_or(0.0)),
            TargetKindCfg::GaussianRandomCov => {
                gaussian_random_cov_target(t.dim.unwrap_or(0), t.matrix_seed.unwrap_or(0))
            }
            TargetKindCfg::FourState => {
                four_state_target(t.eps.unwrap_or(0.0)).map(|f| f.to_density())
            }
        };
        res.map_err(|e| issue("target", e.to_string()))
    }

    /// The run specification, with `schedule` replaced when given.
    pub fn spec_with(&self, schedule: Option<&ScheduleConfig>) -> Result<RunSpec<f64>, Issue> {
        let target = Arc::new(self.build_target()?);
        let dim = target.dim();
        let family = match self.kernel.family {
            FamilyCfg::Rwm => KernelFamily::Rwm,
            FamilyCfg::AmMixture => KernelFamily::AmMixture,
            FamilyCfg::FiniteMh => KernelFamily::FiniteMh,
            FamilyCfg::Direct => KernelFamily::Direct,
        };
        let a = &self.adapt;
        let rule = match a.rule {
            RuleCfg::None => AdaptRule::None,
            RuleCfg::Scaling => AdaptRule::Scaling {
                s: a.s,
                target_rate: a.target_rate.unwrap_or(airmcmc_core::adapt::SCALING_TARGET_RATE),
            },
            RuleCfg::CovEstimate => AdaptRule::CovEstimate { burnin: a.burnin },
            RuleCfg::AccTarget => AdaptRule::AccTarget {
                target_rate: a.target_rate.unwrap_or(airmcmc_core::adapt::ACC_TARGET_RATE),
            },
        };
        let param = match (family, a.rule) {
            (KernelFamily::Rwm, RuleCfg::AccTarget) => KernelParam::AccTarget {
                nu: self.kernel.initial_variance,
            },
            (KernelFamily::Rwm, _) => KernelParam::Scalar {
                gamma: self.kernel.initial_variance,
            },
            (KernelFamily::AmMixture, _) => KernelParam::Covariance {
                sigma: None,
                n_seen: 0,
            },
            (KernelFamily::FiniteMh, _) => KernelParam::FiniteIdx {
                gamma: self.kernel.initial_width,
            },
            (KernelFamily::Direct, _) => KernelParam::Direct,
        };
        let gate = match &a.gate {
            GateCfg::Always {} => AdaptGate::Always,
            GateCfg::LevelSet { b } => AdaptGate::InSet(match *b {
                RegionCfg::All {} => Region::All,
                RegionCfg::Empty {} => Region::Empty,
                RegionCfg::Ball { radius } => Region::Ball { radius },
                RegionCfg::DensityAbove { level } => Region::DensityAbove { level },
            }),
            GateCfg::Coin { p } => AdaptGate::Coin(p.build()),
        };
        let schedule = schedule.unwrap_or(&self.schedule).build()?;
        let mut spec = RunSpec::new(
            target,
            family,
            rule,
            schedule,
            param,
            self.run.iterations,
            self.run.seed,
        );
        spec.gate = gate;
        if let Some(x0) = &self.run.initial_state {
            spec.initial_state = x0.clone();
        } else if self.target.kind == TargetKindCfg::FourState {
            spec.initial_state = vec![0.0; dim];
        }
        spec.functions.push(self.test_function()?);
        Ok(spec)
    }

    pub fn spec(&self) -> Result<RunSpec<f64>, Issue> {
        self.spec_with(None)
    }

    /// The configured test function with its true value when known.
    pub fn test_function(&self) -> Result<TestFunction<f64>, Issue> {
        let kind = parse_function(&self.diagnostics.test_function)
            .map_err(|m| issue("diagnostics.test_function", m))?;
        let known = self.diagnostics.true_value.or_else(|| self.analytic_value(kind));
        Ok(match kind {
            FunctionKind::Identity => TestFunction::identity(known),
            FunctionKind::Square => TestFunction::square(0, known),
            FunctionKind::State(i) => TestFunction::indicator_state(i, known),
        })
    }

    fn analytic_value(&self, kind: FunctionKind) -> Option<f64> {
        let t = &self.target;
        match (t.kind, kind) {
            (TargetKindCfg::StudentT | TargetKindCfg::PolyTail | TargetKindCfg::GaussianRandomCov, FunctionKind::Identity) => Some(0.0),
            (TargetKindCfg::StudentT, FunctionKind::Square) => t.nu.filter(|nu| *nu > 2.0).map(|nu| nu / (nu - 2.0)),
            (TargetKindCfg::FourState, FunctionKind::State(i)) => {
                let target = four_state_target(t.eps?).ok()?;
                (i < target.len()).then(|| *target.prob(i))
            }
            _ => None,
        }
    }

    /// True quantile of the first coordinate, from the config or analytically.
    pub fn true_quantile(&self) -> Option<f64> {
        self.diagnostics.true_quantile.or_else(|| match self.target.kind {
            TargetKindCfg::StudentT => {
                student_t_quantile(self.target.nu?, self.diagnostics.quantile_level).ok()
            }
            _ => None,
        })
    }

    pub fn prefix<'a>(&'a self, fallback: &'a str) -> &'a str {
        self.output.prefix.as_deref().unwrap_or(fallback)
    }
}

impl Default for GateCfg {
    fn default() -> Self {
        GateCfg::Always {}
    }
}

impl CoinCfg {
    fn build(&self) -> CoinSchedule {
        match *self {
            CoinCfg::Harmonic {} => CoinSchedule::Harmonic,
            CoinCfg::Power { a } => CoinSchedule::Power { a },
            CoinCfg::Constant { p } => CoinSchedule::Constant { p },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FunctionKind {
    Identity,
    Square,
    State(usize),
}

fn parse_function(s: &str) -> Result<FunctionKind, String> {
    match s {
        "x" => Ok(FunctionKind::Identity),
        "x2" => Ok(FunctionKind::Square),
        other => other
            .strip_prefix("state:")
            .and_then(|i| i.parse().ok())
            .map(FunctionKind::State)
            .ok_or_else(|| format!("unknown test function `{other}`; use x, x2 or state:<i>")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[target]
kind = "student_t"
nu = 10.0

[kernel]
family = "rwm"
initial_variance = 0.01

[adapt]
rule = "scaling"
s = 0.7

[schedule]
kind = "polynomial"
beta = 1.0

[run]
iterations = 1000
seed = 1
"#;

    #[test]
    fn base_config_parses() {
        let cfg = parse(BASE, "base").unwrap();
        assert_eq!(cfg.hash.len(), 64);
        let spec = cfg.config.spec().unwrap();
        assert_eq!(spec.iterations, 1000);
        assert_eq!(cfg.config.true_quantile().map(|q| (q * 1e4).round()), Some(18125.0));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASE.replace("seed = 1", "seed = 1\nsede = 2");
        let err = parse(&text, "x").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(m) if m.contains("sede")));
    }

    #[test]
    fn negative_beta_names_its_key() {
        let text = BASE.replace("beta = 1.0", "beta = -0.5");
        let err = parse(&text, "x").unwrap_err();
        let ConfigError::Invalid(issues) = err else { panic!() };
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "schedule.beta");
    }

    #[test]
    fn summable_gain_needs_override() {
        let text = BASE.replace("s = 0.7", "s = 1.2");
        let ConfigError::Invalid(issues) = parse(&text, "x").unwrap_err() else { panic!() };
        assert_eq!(issues[0].path, "adapt.s");
        let text = BASE.replace(
            "s = 0.7",
            "s = 1.2\nallow_summable_gain = true",
        );
        assert!(parse(&text, "x").is_ok());
    }

    #[test]
    fn incompatible_family_is_reported() {
        let text = BASE.replace("family = \"rwm\"", "family = \"am_mixture\"");
        let ConfigError::Invalid(issues) = parse(&text, "x").unwrap_err() else { panic!() };
        assert_eq!(issues[0].path, "kernel.family");
    }

    #[test]
    fn several_issues_are_collected() {
        let text = BASE
            .replace("iterations = 1000", "iterations = 0")
            .replace("nu = 10.0", "nu = -1.0");
        let ConfigError::Invalid(issues) = parse(&text, "x").unwrap_err() else { panic!() };
        let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"target.nu") && paths.contains(&"run.iterations"));
    }

    #[test]
    fn test_function_values() {
        let text = BASE.replace("[run]", "[diagnostics]\ntest_function = \"x2\"\n\n[run]");
        let cfg = parse(&text, "x").unwrap();
        assert_eq!(cfg.config.test_function().unwrap().true_value, Some(1.25));
        let text = BASE.replace("[run]", "[diagnostics]\ntest_function = \"y\"\n\n[run]");
        assert!(parse(&text, "x").is_err());
    }

    #[test]
    fn gate_tables_parse() {
        let text = BASE.replace(
            "s = 0.7",
            "s = 0.7\n[adapt.gate]\nkind = \"level_set\"\nB = { kind = \"ball\", radius = 0.5 }",
        );
        let cfg = parse(&text, "x").unwrap().config;
        assert!(matches!(cfg.spec().unwrap().gate, AdaptGate::InSet(Region::Ball { .. })));

        let text = BASE.replace(
            "s = 0.7",
            "s = 0.7\n[adapt.gate]\nkind = \"coin\"\np = { kind = \"constant\", p = 1.5 }",
        );
        let ConfigError::Invalid(issues) = parse(&text, "x").unwrap_err() else { panic!() };
        assert_eq!(issues[0].path, "adapt.gate.p");

        let text = BASE.replace(
            "s = 0.7",
            "s = 0.7\n[adapt.gate]\nkind = \"coin\"\np = { kind = \"harmonic\", a = 2.0 }",
        );
        assert!(matches!(parse(&text, "x"), Err(ConfigError::Parse(_))));
    }
}
