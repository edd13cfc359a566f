//! Experiment configuration (TOML).
//!
//! ```toml
//! particles = 1000
//! steps = 500
//! replicates = 100              # K for brute force, M for mse/confint studies
//! seed = 7
//! estimators = ["alvar", "cle", "fixed_lag(14)"]
//! resampling = "always"         # or "ess(0.5)" or "schedule(path/to/file)"
//! test_function = "id"          # or "square" or "const(2.5)"
//! output_dir = "out"
//! checkpoint_stride = 50
//! brute_force_replicates = 500  # reference for compare/mse-study (0 = off)
//! # max_lag = 100               # optional ALVar lag cap
//! particle_counts = [100, 1000, 10000]   # lag-study
//! burn_in = 100                 # lag-study: leading lags excluded
//! mse_lags = 60                 # mse-study: largest lag tabulated
//!
//! [model]
//! kind = "sv"                   # sv: a, b, sigma; lg: a, b, sigma_u, sigma_v
//! a = 0.975
//! b = 0.641
//! sigma = 0.165
//!
//! [data]
//! # observations = "obs.csv"    # single-column CSV; simulated when absent
//! seed = 1
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    read_observations, simulate_ssm, LgParams, LinearGaussian, StateSpaceModel, StochasticVolatility, SvParams,
};
use crate::rng::{stream_rng, SmcRng, MAIN_STREAM};
use crate::smc::ResamplingPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Sv(SvParams),
    Lg(LgParams),
}

impl ModelConfig {
    pub fn build(&self) -> Result<Ssm> {
        match self {
            ModelConfig::Sv(p) => StochasticVolatility::new(*p).map(Ssm::Sv),
            ModelConfig::Lg(p) => LinearGaussian::stationary(*p).map(Ssm::Lg),
        }
    }
}

/// The state-space models the harness can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ssm {
    Sv(StochasticVolatility),
    Lg(LinearGaussian),
}

impl StateSpaceModel for Ssm {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        match self {
            Ssm::Sv(m) => m.sample_initial(rng),
            Ssm::Lg(m) => m.sample_initial(rng),
        }
    }
    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        match self {
            Ssm::Sv(m) => m.sample_transition(x, rng),
            Ssm::Lg(m) => m.sample_transition(x, rng),
        }
    }
    fn sample_observation(&self, x: f64, rng: &mut SmcRng) -> f64 {
        match self {
            Ssm::Sv(m) => m.sample_observation(x, rng),
            Ssm::Lg(m) => m.sample_observation(x, rng),
        }
    }
    fn log_emission(&self, x: f64, y: f64) -> f64 {
        match self {
            Ssm::Sv(m) => m.log_emission(x, y),
            Ssm::Lg(m) => m.log_emission(x, y),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Observation CSV; simulated from the model when absent.
    pub observations: Option<PathBuf>,
    /// Seed for simulating the observation record.
    #[serde(default)]
    pub seed: u64,
}

/// Which variance estimators a run maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorKind {
    Cle,
    FixedLag(usize),
    /// ALVar; under a non-trivial resampling policy this is the
    /// adaptive-resampling variant, so `alvar_adaptive` is an alias.
    Alvar,
}

fn parenthesised<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(name)?;
    rest.strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .or_else(|| rest.strip_prefix(':'))
        .map(str::trim)
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "cle" => return Ok(Self::Cle),
            "alvar" | "alvar_adaptive" => return Ok(Self::Alvar),
            _ => {}
        }
        if let Some(arg) = parenthesised(s, "fixed_lag") {
            return arg
                .parse()
                .map(Self::FixedLag)
                .map_err(|_| Error::Config(format!("invalid lag in estimator {s:?}")));
        }
        Err(Error::Config(format!(
            "unknown estimator {s:?} (expected cle, fixed_lag(L), alvar or alvar_adaptive)"
        )))
    }
}

impl TryFrom<String> for EstimatorKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cle => f.write_str("cle"),
            Self::FixedLag(l) => write!(f, "fixed_lag({l})"),
            Self::Alvar => f.write_str("alvar"),
        }
    }
}

impl From<EstimatorKind> for String {
    fn from(k: EstimatorKind) -> String {
        k.to_string()
    }
}

/// Resampling policy as written in the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ResamplingConfig {
    #[default]
    Always,
    Ess(f64),
    Schedule(PathBuf),
}

impl FromStr for ResamplingConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "always" {
            return Ok(Self::Always);
        }
        if let Some(arg) = parenthesised(s, "ess") {
            let alpha: f64 = arg
                .parse()
                .map_err(|_| Error::Config(format!("invalid ESS threshold in {s:?}")))?;
            ResamplingPolicy::ess_threshold(alpha).map_err(|e| Error::Config(e.to_string()))?;
            return Ok(Self::Ess(alpha));
        }
        if let Some(arg) = parenthesised(s, "schedule") {
            return Ok(Self::Schedule(PathBuf::from(arg)));
        }
        Err(Error::Config(format!(
            "unknown resampling policy {s:?} (expected always, ess(alpha) or schedule(path))"
        )))
    }
}

impl TryFrom<String> for ResamplingConfig {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ResamplingConfig> for String {
    fn from(r: ResamplingConfig) -> String {
        match r {
            ResamplingConfig::Always => "always".into(),
            ResamplingConfig::Ess(a) => format!("ess({a})"),
            ResamplingConfig::Schedule(p) => format!("schedule({})", p.display()),
        }
    }
}

impl ResamplingConfig {
    pub fn policy(&self) -> Result<ResamplingPolicy> {
        match self {
            Self::Always => Ok(ResamplingPolicy::Always),
            Self::Ess(alpha) => ResamplingPolicy::ess_threshold(*alpha),
            Self::Schedule(path) => read_schedule(path).map(ResamplingPolicy::Schedule),
        }
    }
}

/// A schedule file holds `0`/`1` tokens separated by whitespace or commas.
pub fn read_schedule(path: &Path) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Data {
                path: path.to_path_buf(),
                message: format!("schedule entries must be 0 or 1, found {other:?}"),
            }),
        })
        .collect()
}

/// Scalar test function `h`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestFunction {
    #[default]
    Identity,
    Square,
    Constant(f64),
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Square => x * x,
            Self::Constant(c) => *c,
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "id" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            _ => parenthesised(s, "const")
                .and_then(|a| a.parse().ok())
                .map(Self::Constant)
                .ok_or_else(|| Error::Config(format!("unknown test function {s:?}"))),
        }
    }
}

impl TryFrom<String> for TestFunction {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestFunction> for String {
    fn from(t: TestFunction) -> String {
        match t {
            TestFunction::Identity => "id".into(),
            TestFunction::Square => "square".into(),
            TestFunction::Constant(c) => format!("const({c})"),
        }
    }
}

fn default_replicates() -> usize {
    100
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Alvar]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_stride() -> usize {
    50
}
fn default_burn_in() -> usize {
    100
}
fn default_mse_lags() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    pub particles: usize,
    pub steps: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub resampling: ResamplingConfig,
    #[serde(default)]
    pub test_function: TestFunction,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
    #[serde(default)]
    pub brute_force_replicates: usize,
    #[serde(default)]
    pub max_lag: Option<usize>,
    #[serde(default)]
    pub particle_counts: Vec<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_mse_lags")]
    pub mse_lags: usize,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub steps: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with the defaults above for `model`, `particles` and `steps`.
    pub fn new(model: ModelConfig, particles: usize, steps: usize) -> Self {
        Self {
            model,
            data: DataConfig::default(),
            particles,
            steps,
            replicates: default_replicates(),
            seed: 0,
            estimators: default_estimators(),
            resampling: ResamplingConfig::Always,
            test_function: TestFunction::Identity,
            output_dir: default_output_dir(),
            checkpoint_stride: default_stride(),
            brute_force_replicates: 0,
            max_lag: None,
            particle_counts: Vec::new(),
            burn_in: default_burn_in(),
            mse_lags: default_mse_lags(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.observations.as_mut() {
            resolve(p);
        }
        if let ResamplingConfig::Schedule(p) = &mut self.resampling {
            resolve(p);
        }
        resolve(&mut self.output_dir);
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(n) = overrides.particles {
            self.particles = n;
        }
        if let Some(steps) = overrides.steps {
            self.steps = steps;
        }
        if let Some(out) = &overrides.output_dir {
            self.output_dir = out.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be positive".into()));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::Config("checkpoint_stride must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.particle_counts.contains(&0) {
            return Err(Error::Config("particle_counts must be positive".into()));
        }
        if let ResamplingConfig::Ess(alpha) = self.resampling {
            ResamplingPolicy::ess_threshold(alpha).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.model.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Fixed lags requested, in config order.
    pub fn fixed_lags(&self) -> Vec<usize> {
        self.estimators
            .iter()
            .filter_map(|e| match e {
                EstimatorKind::FixedLag(l) => Some(*l),
                _ => None,
            })
            .collect()
    }

    pub fn wants(&self, kind: EstimatorKind) -> bool {
        self.estimators.contains(&kind)
    }

    /// Checkpoint times `0, stride, 2 stride, ..`, plus the final time.
    pub fn checkpoints(&self) -> Vec<usize> {
        (0..=self.steps).filter(|&n| self.is_checkpoint(n)).collect()
    }

    pub fn is_checkpoint(&self, n: usize) -> bool {
        n.is_multiple_of(self.checkpoint_stride) || n == self.steps
    }

    /// Observation record `y_{0:steps}`: read from the configured file, or
    /// simulated from the model with the data seed.
    pub fn observations(&self) -> Result<Vec<f64>> {
        match &self.data.observations {
            Some(path) => {
                let mut ys = read_observations(path)?;
                if ys.len() < self.steps + 1 {
                    return Err(Error::Data {
                        path: path.clone(),
                        message: format!("{} observations, but {} steps need {}", ys.len(), self.steps, self.steps + 1),
                    });
                }
                ys.truncate(self.steps + 1);
                Ok(ys)
            }
            None => {
                let ssm = self.model.build()?;
                let mut rng = stream_rng(self.data.seed, MAIN_STREAM);
                Ok(simulate_ssm(&ssm, self.steps, &mut rng).observations)
            }
        }
    }
}
