//! Auxiliary particle filters with online estimation of the asymptotic
//! variance of the filter estimates.
//!
//! The crate is organised bottom-up:
//!
//! - [`smc`]: the generic auxiliary particle filter, effective sample size,
//!   multinomial resampling and ESS-triggered adaptive resampling.
//! - [`genealogy`]: rolling windows of Enoch indices (ancestor labels at
//!   recent generations).
//! - [`variance`]: the Chan–Lai, fixed-lag and adaptive-lag (ALVar)
//!   variance estimators, plus depletion diagnostics.
//! - [`models`]: stochastic volatility and linear Gaussian state-space
//!   models, the bootstrap adapter and the Kalman filter.
//! - [`auxiliary_fk`]: the extended Feynman–Kac model on which an auxiliary
//!   particle filter is a plain bootstrap filter; used as a coupling oracle.
//! - [`harness`]: experiment configuration, replicate studies and CSV/JSON
//!   output used by the `alvar` command-line tool.

pub mod auxiliary_fk;
pub mod error;
pub mod genealogy;
pub mod harness;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod smc;
pub mod variance;

pub use error::{Error, Result};
pub use genealogy::EnochWindow;
pub use models::{KalmanTrace, LgParams, LinearGaussian, StochasticVolatility, SvParams};
pub use rng::SmcRng;
pub use smc::{Model, ModelSpec, ParticleCloud, ParticleFilter, ResamplingPolicy};
pub use variance::{AlvarState, CleEstimator, FixedLagEstimator, VarianceEstimate};
