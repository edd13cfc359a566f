//! Generic auxiliary particle filter.
//!
//! A model is described by an initial proposal `nu` with Radon–Nikodym weight
//! `w_{-1}`, proposal kernels `R_n` with weights `w_n`, and adjustment
//! multipliers `theta_n` that tilt the selection probabilities. All weights
//! are handled as natural logarithms.
//!
//! # Random stream order
//!
//! Every run consumes its [`SmcRng`] in the following order, and any
//! algorithm that claims to be coupled with this one (see
//! [`crate::auxiliary_fk`]) must consume it identically:
//!
//! 1. initialisation: one call to [`Model::sample_initial`] per particle, in
//!    particle order;
//! 2. each step that performs selection: `N` uniforms `u_1, .., u_N` (one
//!    `f64` each, in particle order) turned into ancestor indices by inverse
//!    CDF, *then* one call to [`Model::sample_proposal`] per particle in
//!    particle order;
//! 3. each step without selection: only the proposal calls of item 2.
//!
//! Weight evaluations never touch the stream.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{max_log, normalise_log_weights, weighted_mean, CompensatedSum};
use crate::rng::SmcRng;

/// Distribution-flow model driven by an auxiliary particle filter.
///
/// Implementations return log-weights. A weight of zero is `-inf`; NaN and
/// `+inf` are contract violations and are reported as errors by the filter.
pub trait Model {
    type State: Clone + Send + Sync;

    /// Draw one time-0 point from the proposal `nu`.
    fn sample_initial(&self, rng: &mut SmcRng) -> Self::State;

    /// `log w_{-1}(x)`, the log density of `chi` with respect to `nu`.
    fn log_initial_weight(&self, x: &Self::State) -> f64;

    /// Draw from `R_n(x, .)`.
    fn sample_proposal(&self, time: usize, x: &Self::State, rng: &mut SmcRng) -> Self::State;

    /// `log w_n(x, x')`, the log density of `L_n(x, .)` with respect to `R_n(x, .)`.
    fn log_transition_weight(&self, time: usize, x: &Self::State, next: &Self::State) -> f64;

    /// `log theta_n(x)`; must be finite. Defaults to a unit multiplier.
    fn log_adjustment(&self, _time: usize, _x: &Self::State) -> f64 {
        0.0
    }
}

impl<M: Model + ?Sized> Model for &M {
    type State = M::State;

    fn sample_initial(&self, rng: &mut SmcRng) -> Self::State {
        (**self).sample_initial(rng)
    }
    fn log_initial_weight(&self, x: &Self::State) -> f64 {
        (**self).log_initial_weight(x)
    }
    fn sample_proposal(&self, time: usize, x: &Self::State, rng: &mut SmcRng) -> Self::State {
        (**self).sample_proposal(time, x, rng)
    }
    fn log_transition_weight(&self, time: usize, x: &Self::State, next: &Self::State) -> f64 {
        (**self).log_transition_weight(time, x, next)
    }
    fn log_adjustment(&self, time: usize, x: &Self::State) -> f64 {
        (**self).log_adjustment(time, x)
    }
}

type Sampler0<S> = Box<dyn Fn(&mut SmcRng) -> S + Send + Sync>;
type Weight0<S> = Box<dyn Fn(&S) -> f64 + Send + Sync>;
type SamplerN<S> = Box<dyn Fn(usize, &S, &mut SmcRng) -> S + Send + Sync>;
type WeightN<S> = Box<dyn Fn(usize, &S, &S) -> f64 + Send + Sync>;
type AdjustN<S> = Box<dyn Fn(usize, &S) -> f64 + Send + Sync>;

/// A [`Model`] assembled from closures.
///
/// [`ModelSpec::new`] takes log-domain weight functions;
/// [`ModelSpec::from_linear`] and [`ModelSpec::with_adjustment`] accept
/// linear-domain ones and take logarithms internally.
pub struct ModelSpec<S> {
    initial_sampler: Sampler0<S>,
    log_initial_weight: Weight0<S>,
    proposal_sampler: SamplerN<S>,
    log_transition_weight: WeightN<S>,
    log_adjustment: Option<AdjustN<S>>,
}

impl<S> ModelSpec<S> {
    pub fn new(
        initial_sampler: impl Fn(&mut SmcRng) -> S + Send + Sync + 'static,
        log_initial_weight: impl Fn(&S) -> f64 + Send + Sync + 'static,
        proposal_sampler: impl Fn(usize, &S, &mut SmcRng) -> S + Send + Sync + 'static,
        log_transition_weight: impl Fn(usize, &S, &S) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            initial_sampler: Box::new(initial_sampler),
            log_initial_weight: Box::new(log_initial_weight),
            proposal_sampler: Box::new(proposal_sampler),
            log_transition_weight: Box::new(log_transition_weight),
            log_adjustment: None,
        }
    }

    pub fn from_linear(
        initial_sampler: impl Fn(&mut SmcRng) -> S + Send + Sync + 'static,
        initial_weight: impl Fn(&S) -> f64 + Send + Sync + 'static,
        proposal_sampler: impl Fn(usize, &S, &mut SmcRng) -> S + Send + Sync + 'static,
        transition_weight: impl Fn(usize, &S, &S) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            initial_sampler,
            move |x| initial_weight(x).ln(),
            proposal_sampler,
            move |n, x, y| transition_weight(n, x, y).ln(),
        )
    }

    pub fn with_log_adjustment(
        mut self,
        log_adjustment: impl Fn(usize, &S) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.log_adjustment = Some(Box::new(log_adjustment));
        self
    }

    pub fn with_adjustment(self, adjustment: impl Fn(usize, &S) -> f64 + Send + Sync + 'static) -> Self {
        self.with_log_adjustment(move |n, x| adjustment(n, x).ln())
    }
}

impl<S: Clone + Send + Sync> Model for ModelSpec<S> {
    type State = S;

    fn sample_initial(&self, rng: &mut SmcRng) -> S {
        (self.initial_sampler)(rng)
    }
    fn log_initial_weight(&self, x: &S) -> f64 {
        (self.log_initial_weight)(x)
    }
    fn sample_proposal(&self, time: usize, x: &S, rng: &mut SmcRng) -> S {
        (self.proposal_sampler)(time, x, rng)
    }
    fn log_transition_weight(&self, time: usize, x: &S, next: &S) -> f64 {
        (self.log_transition_weight)(time, x, next)
    }
    fn log_adjustment(&self, time: usize, x: &S) -> f64 {
        self.log_adjustment.as_ref().map_or(0.0, |f| f(time, x))
    }
}

impl<S> fmt::Debug for ModelSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("adjusted", &self.log_adjustment.is_some())
            .finish_non_exhaustive()
    }
}

/// Log-weight check: zero weights (`-inf`) are allowed, NaN and `+inf` are not.
pub(crate) fn check_log_weight(value: f64, what: &'static str, time: usize) -> Result<f64> {
    if value.is_nan() || value == f64::INFINITY {
        Err(Error::InvalidWeight { what, time, value })
    } else {
        Ok(value)
    }
}

/// Adjustment multipliers must be finite and positive, i.e. finite logs.
pub(crate) fn check_log_adjustment(value: f64, time: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidWeight {
            what: "adjustment multiplier",
            time,
            value,
        })
    }
}

/// One generation of weighted particles.
///
/// Ancestor indices are 0-based; after initialisation or a step without
/// selection they are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<S> {
    time: usize,
    particles: Vec<S>,
    log_weights: Vec<f64>,
    ancestors: Vec<usize>,
}

impl<S> ParticleCloud<S> {
    /// Build a cloud, checking the shape invariants.
    pub fn new(time: usize, particles: Vec<S>, log_weights: Vec<f64>, ancestors: Vec<usize>) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::NoParticles);
        }
        for len in [log_weights.len(), ancestors.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, got: len });
            }
        }
        if let Some(&index) = ancestors.iter().find(|&&a| a >= n) {
            return Err(Error::InvalidAncestor { index, n_particles: n });
        }
        for &lw in &log_weights {
            check_log_weight(lw, "particle weight", time)?;
        }
        if max_log(&log_weights) == f64::NEG_INFINITY {
            return Err(Error::WeightDegeneracy { time });
        }
        Ok(Self {
            time,
            particles,
            log_weights,
            ancestors,
        })
    }

    /// Cloud at `time` with the given particles and unit weights.
    pub fn uniform(time: usize, particles: Vec<S>) -> Result<Self> {
        let n = particles.len();
        Self::new(time, particles, vec![0.0; n], (0..n).collect())
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn ancestors(&self) -> &[usize] {
        &self.ancestors
    }

    /// Normalised weights `omega_i / Omega`.
    pub fn normalised_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let ok = normalise_log_weights(&self.log_weights, &mut out);
        debug_assert!(ok, "valid clouds have positive total weight");
        out
    }

    /// Effective sample size `1 / sum_i (omega_i / Omega)^2`, in `[1, N]`.
    pub fn ess(&self) -> f64 {
        ess(&self.log_weights)
    }

    /// Self-normalised estimate of `eta_n h`.
    pub fn estimate(&self, h: impl Fn(&S) -> f64) -> f64 {
        let values: Vec<f64> = self.particles.iter().map(h).collect();
        weighted_mean(&self.normalised_weights(), &values)
    }
}

/// Effective sample size of a set of log-weights.
pub fn ess(log_weights: &[f64]) -> f64 {
    let shift = max_log(log_weights);
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    for &lw in log_weights {
        let w = (lw - shift).exp();
        sum.add(w);
        sum_sq.add(w * w);
    }
    let (s, s2) = (sum.value(), sum_sq.value());
    (s * s / s2).clamp(1.0, log_weights.len() as f64)
}

/// `draws` i.i.d. indices with `P(k) = weights[k] / sum(weights)`.
///
/// Inverse CDF over a cumulative array, one uniform per draw, binary search
/// per draw.
pub fn categorical_resample(weights: &[f64], draws: usize, rng: &mut SmcRng) -> Result<Vec<usize>> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    let mut last_positive = None;
    for (k, &w) in weights.iter().enumerate() {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidWeight {
                what: "categorical weight",
                time: 0,
                value: w,
            });
        }
        if w > 0.0 {
            last_positive = Some(k);
        }
        acc += w;
        cumulative.push(acc);
    }
    let last_positive = last_positive.ok_or(Error::ZeroCategoricalWeights)?;
    let total = acc;
    Ok((0..draws)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            // First k with cumulative[k] > target; zero-weight categories
            // share their predecessor's cumulative value and are never hit.
            cumulative
                .partition_point(|&c| c <= target)
                .min(last_positive)
        })
        .collect())
}

/// [`categorical_resample`] on log-weights (max-shifted before exponentiation).
pub fn categorical_resample_log(log_weights: &[f64], draws: usize, rng: &mut SmcRng) -> Result<Vec<usize>> {
    let shift = max_log(log_weights);
    if shift == f64::NEG_INFINITY {
        return Err(Error::ZeroCategoricalWeights);
    }
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - shift).exp()).collect();
    categorical_resample(&weights, draws, rng)
}

/// Draw the time-0 cloud: `xi_i ~ nu`, `omega_i = w_{-1}(xi_i)`.
pub fn init_filter<M: Model>(model: &M, n_particles: usize, rng: &mut SmcRng) -> Result<ParticleCloud<M::State>> {
    if n_particles == 0 {
        return Err(Error::NoParticles);
    }
    let particles: Vec<M::State> = (0..n_particles).map(|_| model.sample_initial(rng)).collect();
    let log_weights = particles
        .iter()
        .map(|x| check_log_weight(model.log_initial_weight(x), "initial weight", 0))
        .collect::<Result<Vec<_>>>()?;
    if max_log(&log_weights) == f64::NEG_INFINITY {
        return Err(Error::DegenerateInitialisation);
    }
    Ok(ParticleCloud {
        time: 0,
        particles,
        log_weights,
        ancestors: (0..n_particles).collect(),
    })
}

/// One auxiliary particle filter iteration with selection.
///
/// Ancestors are drawn with probabilities proportional to
/// `omega_l * theta_n(xi_l)`, each particle is moved with `R_n`, and the new
/// weight is `w_n(parent, child) / theta_n(parent)`.
pub fn apf_step<M: Model>(
    model: &M,
    cloud: &ParticleCloud<M::State>,
    rng: &mut SmcRng,
) -> Result<ParticleCloud<M::State>> {
    let time = cloud.time;
    let n = cloud.len();
    let log_adjust = cloud
        .particles
        .iter()
        .map(|x| check_log_adjustment(model.log_adjustment(time, x), time))
        .collect::<Result<Vec<_>>>()?;
    let selection: Vec<f64> = cloud
        .log_weights
        .iter()
        .zip(&log_adjust)
        .map(|(lw, la)| lw + la)
        .collect();
    let ancestors = categorical_resample_log(&selection, n, rng).map_err(|e| match e {
        Error::ZeroCategoricalWeights => Error::WeightDegeneracy { time },
        other => other,
    })?;
    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &a in &ancestors {
        let parent = &cloud.particles[a];
        let child = model.sample_proposal(time, parent, rng);
        let lw = check_log_weight(
            model.log_transition_weight(time, parent, &child),
            "transition weight",
            time,
        )?;
        log_weights.push(lw - log_adjust[a]);
        particles.push(child);
    }
    if max_log(&log_weights) == f64::NEG_INFINITY {
        return Err(Error::WeightDegeneracy { time: time + 1 });
    }
    Ok(ParticleCloud {
        time: time + 1,
        particles,
        log_weights,
        ancestors,
    })
}

/// When to perform selection.
#[derive(Debug, Clone, PartialEq)]
pub enum ResamplingPolicy {
    /// Select at every step.
    Always,
    /// Select when `ESS < alpha * N`, with `alpha` in `(0, 1)`.
    EssThreshold(f64),
    /// Select at step `n` iff `schedule[n]`.
    Schedule(Vec<bool>),
}

impl ResamplingPolicy {
    pub fn ess_threshold(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self::EssThreshold(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "ESS threshold must lie in (0, 1), got {alpha}"
            )))
        }
    }

    /// The indicator `rho_n` for selecting out of `cloud`.
    pub fn should_resample<S>(&self, cloud: &ParticleCloud<S>) -> Result<bool> {
        match self {
            Self::Always => Ok(true),
            Self::EssThreshold(alpha) => Ok(cloud.ess() < alpha * cloud.len() as f64),
            Self::Schedule(bits) => bits
                .get(cloud.time)
                .copied()
                .ok_or(Error::ScheduleExhausted { time: cloud.time }),
        }
    }
}

/// One iteration with selection decided by `policy`.
///
/// Returns the new cloud and whether selection happened. Without selection
/// the ancestors are the identity and the weight is multiplied by `w_n`
/// only (no division by `theta_n`).
pub fn adaptive_apf_step<M: Model>(
    model: &M,
    cloud: &ParticleCloud<M::State>,
    policy: &ResamplingPolicy,
    rng: &mut SmcRng,
) -> Result<(ParticleCloud<M::State>, bool)> {
    if policy.should_resample(cloud)? {
        return apf_step(model, cloud, rng).map(|c| (c, true));
    }
    let time = cloud.time;
    let n = cloud.len();
    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for (parent, &lw) in cloud.particles.iter().zip(&cloud.log_weights) {
        let child = model.sample_proposal(time, parent, rng);
        let w = check_log_weight(
            model.log_transition_weight(time, parent, &child),
            "transition weight",
            time,
        )?;
        log_weights.push(lw + w);
        particles.push(child);
    }
    if max_log(&log_weights) == f64::NEG_INFINITY {
        return Err(Error::WeightDegeneracy { time: time + 1 });
    }
    let cloud = ParticleCloud {
        time: time + 1,
        particles,
        log_weights,
        ancestors: (0..n).collect(),
    };
    Ok((cloud, false))
}

/// Self-normalised estimate of `eta_n h`.
pub fn filter_estimate<S>(cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> f64 {
    cloud.estimate(h)
}

/// A running filter: a model, its current cloud, the policy and the stream.
pub struct ParticleFilter<M: Model> {
    model: M,
    cloud: ParticleCloud<M::State>,
    policy: ResamplingPolicy,
    rng: SmcRng,
    last_resampled: bool,
}

impl<M: Model> ParticleFilter<M> {
    pub fn new(model: M, n_particles: usize, policy: ResamplingPolicy, mut rng: SmcRng) -> Result<Self> {
        let cloud = init_filter(&model, n_particles, &mut rng)?;
        Ok(Self {
            model,
            cloud,
            policy,
            rng,
            last_resampled: false,
        })
    }

    /// Advance one step; returns whether selection happened.
    pub fn step(&mut self) -> Result<bool> {
        let (cloud, resampled) = adaptive_apf_step(&self.model, &self.cloud, &self.policy, &mut self.rng)?;
        self.cloud = cloud;
        self.last_resampled = resampled;
        Ok(resampled)
    }

    pub fn cloud(&self) -> &ParticleCloud<M::State> {
        &self.cloud
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Whether the step that produced the current cloud performed selection.
    pub fn last_resampled(&self) -> bool {
        self.last_resampled
    }
}
