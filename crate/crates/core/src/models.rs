//! Scalar state-space models, the bootstrap adapter and the Kalman filter.
//!
//! Both models have the form `X_{n+1} = a X_n + noise`, observed through a
//! Gaussian emission:
//!
//! - stochastic volatility: `X_{n+1} = a X_n + sigma U`, `Y_n = b exp(X_n / 2) V`;
//! - linear Gaussian: `X_{n+1} = a X_n + sigma_u U`, `Y_n = b X_n + sigma_v V`.

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SmcRng;
use crate::smc::Model;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn normal(rng: &mut SmcRng) -> f64 {
    StandardNormal.sample(rng)
}

/// A scalar hidden Markov model with a tractable emission density.
pub trait StateSpaceModel: Send + Sync {
    /// Draw `X_0`.
    fn sample_initial(&self, rng: &mut SmcRng) -> f64;
    /// Draw `X_{n+1}` given `X_n = x`.
    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64;
    /// Draw `Y_n` given `X_n = x`.
    fn sample_observation(&self, x: f64, rng: &mut SmcRng) -> f64;
    /// `log g(x, y)`.
    fn log_emission(&self, x: f64, y: f64) -> f64;
}

/// Stochastic volatility parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl SvParams {
    /// Values used in the reference experiments.
    pub const REFERENCE: SvParams = SvParams {
        a: 0.975,
        b: 0.641,
        sigma: 0.165,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.a.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stochastic volatility needs |a| < 1 for a stationary start, got a = {}",
                self.a
            )));
        }
        if !(self.b > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("b and sigma must be positive".into()));
        }
        Ok(())
    }

    /// Variance `sigma^2 / (1 - a^2)` of the stationary state law.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.a * self.a)
    }
}

/// Stochastic volatility model started from its stationary law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticVolatility {
    params: SvParams,
    initial_sd: f64,
}

impl StochasticVolatility {
    pub fn new(params: SvParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            initial_sd: params.stationary_variance().sqrt(),
        })
    }

    pub fn params(&self) -> SvParams {
        self.params
    }
}

impl StateSpaceModel for StochasticVolatility {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.initial_sd * normal(rng)
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.a * x + self.params.sigma * normal(rng)
    }

    fn sample_observation(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.b * (x / 2.0).exp() * normal(rng)
    }

    fn log_emission(&self, x: f64, y: f64) -> f64 {
        // Y | X = x ~ N(0, b^2 e^x)
        let var = self.params.b * self.params.b * x.exp();
        -0.5 * (LN_2PI + var.ln()) - y * y / (2.0 * var)
    }
}

/// Linear Gaussian parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgParams {
    pub a: f64,
    pub b: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl LgParams {
    /// Values used in the reference experiments.
    pub const REFERENCE: LgParams = LgParams {
        a: 0.98,
        b: 1.0,
        sigma_u: 0.2,
        sigma_v: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v > 0.0) {
            return Err(Error::InvalidParameter("sigma_v must be positive".into()));
        }
        if !(self.sigma_u >= 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidParameter(
                "sigma_u must be non-negative and a, b finite".into(),
            ));
        }
        Ok(())
    }
}

/// Linear Gaussian model with Gaussian prior `X_0 ~ N(prior_mean, prior_variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    params: LgParams,
    prior_mean: f64,
    prior_variance: f64,
}

impl LinearGaussian {
    /// Prior `N(0, sigma_u^2 / (1 - a^2))`; needs `|a| < 1`.
    pub fn stationary(params: LgParams) -> Result<Self> {
        params.validate()?;
        if !(params.a.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stationary prior needs |a| < 1, got a = {}",
                params.a
            )));
        }
        let var = params.sigma_u * params.sigma_u / (1.0 - params.a * params.a);
        Ok(Self {
            params,
            prior_mean: 0.0,
            prior_variance: var,
        })
    }

    pub fn with_prior(params: LgParams, prior_mean: f64, prior_variance: f64) -> Result<Self> {
        params.validate()?;
        if !(prior_variance >= 0.0) || !prior_mean.is_finite() {
            return Err(Error::InvalidParameter("prior variance must be non-negative".into()));
        }
        Ok(Self {
            params,
            prior_mean,
            prior_variance,
        })
    }

    pub fn params(&self) -> LgParams {
        self.params
    }

    pub fn prior(&self) -> (f64, f64) {
        (self.prior_mean, self.prior_variance)
    }
}

impl StateSpaceModel for LinearGaussian {
    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.prior_mean + self.prior_variance.sqrt() * normal(rng)
    }

    fn sample_transition(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.a * x + self.params.sigma_u * normal(rng)
    }

    fn sample_observation(&self, x: f64, rng: &mut SmcRng) -> f64 {
        self.params.b * x + self.params.sigma_v * normal(rng)
    }

    fn log_emission(&self, x: f64, y: f64) -> f64 {
        let sd = self.params.sigma_v;
        let z = (y - self.params.b * x) / sd;
        -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
    }
}

/// Hidden states and observations of one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
}

/// Simulate `X_{0:n_steps}` and `Y_{0:n_steps}`. For each time the state is
/// drawn first, then its observation.
pub fn simulate_ssm<M: StateSpaceModel + ?Sized>(model: &M, n_steps: usize, rng: &mut SmcRng) -> Trajectory {
    let x0 = model.sample_initial(rng);
    simulate_ssm_from(model, x0, n_steps, rng)
}

/// As [`simulate_ssm`] but with a fixed initial state.
pub fn simulate_ssm_from<M: StateSpaceModel + ?Sized>(
    model: &M,
    x0: f64,
    n_steps: usize,
    rng: &mut SmcRng,
) -> Trajectory {
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut observations = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    for n in 0..=n_steps {
        if n > 0 {
            x = model.sample_transition(x, rng);
        }
        states.push(x);
        observations.push(model.sample_observation(x, rng));
    }
    Trajectory { states, observations }
}

/// Bootstrap particle filter for a state-space model and an observation
/// record: proposal = prior dynamics, `theta = 1`, weight `g(x', y_{n+1})`.
///
/// Steps beyond the record have no observation; running past
/// `observations.len() - 1` panics.
#[derive(Debug)]
pub struct Bootstrap<'a, M> {
    ssm: &'a M,
    observations: &'a [f64],
}

impl<M> Clone for Bootstrap<'_, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M> Copy for Bootstrap<'_, M> {}

/// Wrap `ssm` and `observations` as a [`Model`].
pub fn bootstrap_adapter<'a, M: StateSpaceModel>(ssm: &'a M, observations: &'a [f64]) -> Bootstrap<'a, M> {
    Bootstrap { ssm, observations }
}

impl<M> Bootstrap<'_, M> {
    /// Number of filter steps the observation record supports.
    pub fn max_steps(&self) -> usize {
        self.observations.len().saturating_sub(1)
    }

    pub fn observations(&self) -> &[f64] {
        self.observations
    }
}

impl<M: StateSpaceModel> Model for Bootstrap<'_, M> {
    type State = f64;

    fn sample_initial(&self, rng: &mut SmcRng) -> f64 {
        self.ssm.sample_initial(rng)
    }

    fn log_initial_weight(&self, x: &f64) -> f64 {
        self.ssm.log_emission(*x, self.observations[0])
    }

    fn sample_proposal(&self, _time: usize, x: &f64, rng: &mut SmcRng) -> f64 {
        self.ssm.sample_transition(*x, rng)
    }

    fn log_transition_weight(&self, time: usize, _x: &f64, next: &f64) -> f64 {
        self.ssm.log_emission(*next, self.observations[time + 1])
    }
}

/// Filter means and variances `E[X_n | Y_{0:n}]`, `Var[X_n | Y_{0:n}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrace {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Exact filter for the linear Gaussian model, starting from its prior.
pub fn kalman_filter(model: &LinearGaussian, observations: &[f64]) -> KalmanTrace {
    let LgParams { a, b, sigma_u, sigma_v } = model.params;
    let (mut mean, mut var) = model.prior();
    let mut means = Vec::with_capacity(observations.len());
    let mut variances = Vec::with_capacity(observations.len());
    for (n, &y) in observations.iter().enumerate() {
        if n > 0 {
            mean *= a;
            var = a * a * var + sigma_u * sigma_u;
        }
        let innovation_var = b * b * var + sigma_v * sigma_v;
        let gain = var * b / innovation_var;
        mean += gain * (y - b * mean);
        var *= 1.0 - gain * b;
        means.push(mean);
        variances.push(var.max(0.0));
    }
    KalmanTrace { means, variances }
}

/// Read a single-column observation CSV with a header row.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.len() != 1 {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: format!("expected one observation column, found {}", headers.len()),
        });
    }
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = record.get(0).unwrap_or("").trim();
        let value: f64 = field.parse().map_err(|_| Error::Data {
            path: path.to_path_buf(),
            message: format!("row {}: cannot parse {field:?} as a number", line + 1),
        })?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: "no observations".into(),
        });
    }
    Ok(out)
}

/// Write a single-column CSV with header `column`.
pub fn write_series(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record([column])?;
    for v in values {
        writer.write_record([format!("{v:?}")])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Normal density helper used by tests and adapters.
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}
