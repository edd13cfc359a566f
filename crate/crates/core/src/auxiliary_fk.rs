//! The auxiliary Feynman–Kac model on pairs of consecutive states.
//!
//! An auxiliary particle filter on a model `(nu, w_{-1}, R_n, w_n, theta_n)`
//! is a plain bootstrap filter on the extended model whose states are pairs
//! `xbar_n = (x_{n-1}, x_n)`, with potentials
//!
//! ```text
//! gbar_0(x_0)          = theta_0(x_0) w_{-1}(x_0)
//! gbar_n(x_{n-1}, x_n) = w_{n-1}(x_{n-1}, x_n) theta_n(x_n) / theta_{n-1}(x_{n-1})
//! ```
//!
//! and a mutation kernel that copies the second coordinate into the first
//! and draws a new second coordinate from `R_n`. Under a shared random
//! stream (see the draw order in [`crate::smc`]) the bootstrap filter here
//! and [`crate::smc::apf_step`] produce the same indices, the same particles
//! (second coordinates) and weights related by `omegabar = omega * theta`.
//! This module is the independent route used to check the APF.

use crate::error::{Error, Result};
use crate::numeric::max_log;
use crate::rng::SmcRng;
use crate::smc::{categorical_resample_log, check_log_adjustment, check_log_weight, Model, ParticleCloud};

/// A point of the extended state space: `(x_{n-1}, x_n)`, or just `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState<S> {
    pub previous: Option<S>,
    pub current: S,
}

/// The extended model built on top of `base`.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedModel<M> {
    base: M,
}

/// Build the extended model of `model`.
pub fn extend<M: Model>(model: M) -> ExtendedModel<M> {
    ExtendedModel { base: model }
}

impl<M: Model> ExtendedModel<M> {
    pub fn base(&self) -> &M {
        &self.base
    }

    /// `log gbar_0(x_0)`.
    pub fn log_initial_potential(&self, x: &M::State) -> Result<f64> {
        let lw = check_log_weight(self.base.log_initial_weight(x), "initial weight", 0)?;
        let la = check_log_adjustment(self.base.log_adjustment(0, x), 0)?;
        Ok(la + lw)
    }

    /// `log gbar_n(xbar_n)` for `n >= 1`.
    pub fn log_potential(&self, time: usize, x: &PairState<M::State>) -> Result<f64> {
        let previous = x
            .previous
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("potential at n >= 1 needs a pair state".into()))?;
        let lw = check_log_weight(
            self.base.log_transition_weight(time - 1, previous, &x.current),
            "transition weight",
            time - 1,
        )?;
        let la_new = check_log_adjustment(self.base.log_adjustment(time, &x.current), time)?;
        let la_old = check_log_adjustment(self.base.log_adjustment(time - 1, previous), time - 1)?;
        Ok(lw + la_new - la_old)
    }

    /// Draw from the mutation kernel at `time`: copy, then propose.
    pub fn mutate(&self, time: usize, parent: &PairState<M::State>, rng: &mut SmcRng) -> PairState<M::State> {
        PairState {
            previous: Some(parent.current.clone()),
            current: self.base.sample_proposal(time, &parent.current, rng),
        }
    }
}

/// Time-0 cloud of the extended model: `xbar_0 ~ nu`, `omegabar = gbar_0`.
pub fn extended_init<M: Model>(
    ext: &ExtendedModel<M>,
    n_particles: usize,
    rng: &mut SmcRng,
) -> Result<ParticleCloud<PairState<M::State>>> {
    if n_particles == 0 {
        return Err(Error::NoParticles);
    }
    let particles: Vec<PairState<M::State>> = (0..n_particles)
        .map(|_| PairState {
            previous: None,
            current: ext.base.sample_initial(rng),
        })
        .collect();
    let log_weights = particles
        .iter()
        .map(|p| ext.log_initial_potential(&p.current))
        .collect::<Result<Vec<_>>>()?;
    if max_log(&log_weights) == f64::NEG_INFINITY {
        return Err(Error::DegenerateInitialisation);
    }
    ParticleCloud::new(0, particles, log_weights, (0..n_particles).collect())
}

/// One bootstrap iteration on the extended model: select by `omegabar`,
/// mutate, weight by `gbar_{n+1}`.
pub fn bootstrap_step<M: Model>(
    ext: &ExtendedModel<M>,
    cloud: &ParticleCloud<PairState<M::State>>,
    rng: &mut SmcRng,
) -> Result<ParticleCloud<PairState<M::State>>> {
    let time = cloud.time();
    let n = cloud.len();
    let indices = categorical_resample_log(cloud.log_weights(), n, rng).map_err(|e| match e {
        Error::ZeroCategoricalWeights => Error::WeightDegeneracy { time },
        other => other,
    })?;
    let particles: Vec<PairState<M::State>> = indices
        .iter()
        .map(|&k| ext.mutate(time, &cloud.particles()[k], rng))
        .collect();
    let log_weights = particles
        .iter()
        .map(|p| ext.log_potential(time + 1, p))
        .collect::<Result<Vec<_>>>()?;
    ParticleCloud::new(time + 1, particles, log_weights, indices)
}
