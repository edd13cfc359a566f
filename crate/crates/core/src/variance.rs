//! Lag-based estimators of the asymptotic variance of `eta_n^N h`.
//!
//! All estimators share one formula: with normalised weights `wbar_j`,
//! centred terms `c_j = wbar_j (h(xi_j) - eta_n^N h)` and a grouping row
//! `E` of Enoch indices,
//!
//! ```text
//! sigma^2 = N * sum_i ( sum_{j : E_j = i} c_j )^2
//! ```
//!
//! They differ only in which generation supplies the grouping:
//!
//! - [`CleEstimator`] groups by Eve indices (generation 0);
//! - [`FixedLagEstimator`] groups by generation `r - lambda` for a fixed
//!   `lambda`;
//! - [`AlvarState`] picks `lambda_{n+1}` as the argmax of the estimates over
//!   `0 ..= lambda_n + 1`, ties going to the largest lag.
//!
//! Generations count selection steps, which makes the same code serve
//! filters with adaptive resampling. The estimand itself (the asymptotic
//! variance of the CLT for the particle estimator) has no closed form and is
//! never computed here; [`crate::harness::brute_force_variance`] is the
//! reference.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::genealogy::{EnochWindow, EveRow};
use crate::numeric::{normalise_log_weights, weighted_mean, CompensatedSum};
use crate::smc::ParticleCloud;

/// One variance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub time: usize,
    pub lag: usize,
    pub value: f64,
    /// Generation whose Enoch indices defined the groups.
    pub reference_generation: usize,
    /// Number of distinct groups.
    pub distinct_ancestors: usize,
}

/// Centred weighted terms `wbar_j (h(xi_j) - eta_n^N h)` of a cloud.
pub fn centred_terms<S>(cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Vec<f64> {
    let mut weights = Vec::with_capacity(cloud.len());
    let ok = normalise_log_weights(cloud.log_weights(), &mut weights);
    debug_assert!(ok);
    let values: Vec<f64> = cloud.particles().iter().map(h).collect();
    let mean = weighted_mean(&weights, &values);
    weights
        .iter()
        .zip(&values)
        .map(|(w, v)| w * (v - mean))
        .collect()
}

/// Reusable scatter-accumulate buffers for grouped sums.
#[derive(Debug, Clone, Default)]
pub struct GroupAccumulator {
    sum: Vec<f64>,
    compensation: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl GroupAccumulator {
    pub fn new(n_labels: usize) -> Self {
        Self {
            sum: vec![0.0; n_labels],
            compensation: vec![0.0; n_labels],
            seen: vec![false; n_labels],
            touched: Vec::with_capacity(n_labels),
        }
    }

    /// `(N * sum_i (sum_{j : row_j = i} centred_j)^2, distinct labels)`.
    ///
    /// A single group gives exactly zero: its sum is the total of the centred
    /// terms, which vanishes identically.
    pub fn grouped_value(&mut self, centred: &[f64], row: &[usize]) -> (f64, usize) {
        debug_assert_eq!(centred.len(), row.len());
        if self.sum.len() < row.len() {
            *self = Self::new(row.len());
        }
        for (&c, &label) in centred.iter().zip(row) {
            if !self.seen[label] {
                self.seen[label] = true;
                self.touched.push(label);
            }
            // Neumaier update of group `label`.
            let s = self.sum[label];
            let t = s + c;
            self.compensation[label] += if s.abs() >= c.abs() { (s - t) + c } else { (c - t) + s };
            self.sum[label] = t;
        }
        let distinct = self.touched.len();
        let mut total = CompensatedSum::new();
        for &label in &self.touched {
            let g = self.sum[label] + self.compensation[label];
            total.add(g * g);
            self.sum[label] = 0.0;
            self.compensation[label] = 0.0;
            self.seen[label] = false;
        }
        self.touched.clear();
        if distinct <= 1 {
            return (0.0, distinct);
        }
        (row.len() as f64 * total.value(), distinct)
    }
}

fn check_width<S>(cloud: &ParticleCloud<S>, n_particles: usize) -> Result<()> {
    if cloud.len() != n_particles {
        return Err(Error::LengthMismatch {
            expected: n_particles,
            got: cloud.len(),
        });
    }
    Ok(())
}

/// Fixed-lag estimate at `lag`, grouping by generation `r<lag>` of `window`.
pub fn lag_estimate<S>(
    cloud: &ParticleCloud<S>,
    window: &EnochWindow,
    lag: usize,
    h: impl Fn(&S) -> f64,
) -> Result<VarianceEstimate> {
    check_width(cloud, window.n_particles())?;
    let row = window.row_at_lag(lag)?;
    let centred = centred_terms(cloud, h);
    let (value, distinct) = GroupAccumulator::new(cloud.len()).grouped_value(&centred, row);
    Ok(VarianceEstimate {
        time: cloud.time(),
        lag,
        value,
        reference_generation: window.newest_generation().saturating_sub(lag),
        distinct_ancestors: distinct,
    })
}

/// Chan–Lai estimate: groups by Eve indices. `window` must still hold
/// generation 0.
pub fn cle<S>(cloud: &ParticleCloud<S>, window: &EnochWindow, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
    if window.oldest_generation() != 0 {
        return Err(Error::GenerationOutOfWindow {
            generation: 0,
            oldest: window.oldest_generation(),
            newest: window.newest_generation(),
        });
    }
    lag_estimate(cloud, window, window.newest_generation(), h)
}

/// Adaptive-lag (ALVar) estimator state.
///
/// Feed it every cloud of a run, in order: [`AlvarState::initial_estimate`]
/// for time 0, then [`AlvarState::step`] (selection at every step) or
/// [`AlvarState::adaptive_step`] for each later time.
#[derive(Debug, Clone)]
pub struct AlvarState {
    lag: usize,
    window: EnochWindow,
    resampling_count: usize,
    time: usize,
    max_lag: Option<usize>,
    cap_hits: usize,
    scratch: GroupAccumulator,
    candidates: Vec<f64>,
}

impl AlvarState {
    /// `lambda_0 = 0` with a single identity row.
    pub fn new(n_particles: usize) -> Result<Self> {
        Ok(Self {
            lag: 0,
            window: EnochWindow::new(n_particles)?,
            resampling_count: 0,
            time: 0,
            max_lag: None,
            cap_hits: 0,
            scratch: GroupAccumulator::new(n_particles),
            candidates: Vec::new(),
        })
    }

    /// Never consider lags above `max_lag`.
    pub fn with_max_lag(mut self, max_lag: Option<usize>) -> Self {
        self.max_lag = max_lag;
        self
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn resampling_count(&self) -> usize {
        self.resampling_count
    }

    pub fn window(&self) -> &EnochWindow {
        &self.window
    }

    /// Candidate estimates of the last argmax, indexed by lag.
    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    /// How many argmax steps were truncated by the lag cap.
    pub fn cap_hits(&self) -> usize {
        self.cap_hits
    }

    /// Estimate for the time-0 cloud.
    pub fn initial_estimate<S>(&mut self, cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
        if cloud.time() != 0 || self.time != 0 {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        self.current_estimate(cloud, h)
    }

    /// One step where the cloud was produced with selection.
    pub fn step<S>(&mut self, cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
        self.adaptive_step(cloud, true, h)
    }

    /// One step of a filter with adaptive resampling. `resampled` says
    /// whether the step that produced `cloud` performed selection.
    ///
    /// Without selection the lag and window stay put and the estimate is
    /// recomputed on the new weights with the existing grouping.
    pub fn adaptive_step<S>(
        &mut self,
        cloud: &ParticleCloud<S>,
        resampled: bool,
        h: impl Fn(&S) -> f64,
    ) -> Result<VarianceEstimate> {
        if cloud.time() != self.time + 1 {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        check_width(cloud, self.window.n_particles())?;
        if !resampled {
            self.time += 1;
            self.candidates.clear();
            return self.current_estimate(cloud, h);
        }

        let mut top = self.lag + 1;
        if let Some(cap) = self.max_lag {
            if top > cap {
                if self.cap_hits == 0 {
                    warn!("ALVar lag reached the cap {cap} at time {}", cloud.time());
                } else {
                    debug!("ALVar lag capped at {cap} at time {}", cloud.time());
                }
                self.cap_hits += 1;
                top = cap;
            }
        }
        self.window.advance(cloud.ancestors(), top + 1)?;
        self.resampling_count += 1;
        self.time += 1;

        let centred = centred_terms(cloud, h);
        self.candidates.clear();
        let mut best = (0, f64::NEG_INFINITY, 0);
        for lag in 0..=top {
            let row = self.window.row_at_lag(lag)?;
            let (value, distinct) = self.scratch.grouped_value(&centred, row);
            self.candidates.push(value);
            if value >= best.1 {
                best = (lag, value, distinct);
            }
        }
        let (lag, value, distinct) = best;
        self.lag = lag;
        self.window.retain_lag(lag);
        Ok(VarianceEstimate {
            time: cloud.time(),
            lag,
            value,
            reference_generation: self.resampling_count.saturating_sub(lag),
            distinct_ancestors: distinct,
        })
    }

    fn current_estimate<S>(&mut self, cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
        check_width(cloud, self.window.n_particles())?;
        let centred = centred_terms(cloud, h);
        let row = self.window.row_at_lag(self.lag)?;
        let (value, distinct) = self.scratch.grouped_value(&centred, row);
        Ok(VarianceEstimate {
            time: cloud.time(),
            lag: self.lag,
            value,
            reference_generation: self.resampling_count.saturating_sub(self.lag),
            distinct_ancestors: distinct,
        })
    }
}

/// Fixed-lag estimator with its own window of `lag + 1` rows.
#[derive(Debug, Clone)]
pub struct FixedLagEstimator {
    lag: usize,
    window: EnochWindow,
    time: usize,
    scratch: GroupAccumulator,
}

impl FixedLagEstimator {
    pub fn new(n_particles: usize, lag: usize) -> Result<Self> {
        Ok(Self {
            lag,
            window: EnochWindow::new(n_particles)?,
            time: 0,
            scratch: GroupAccumulator::new(n_particles),
        })
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn window(&self) -> &EnochWindow {
        &self.window
    }

    /// Estimate for the cloud the estimator is currently aligned with.
    pub fn estimate<S>(&mut self, cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
        if cloud.time() != self.time {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        check_width(cloud, self.window.n_particles())?;
        let centred = centred_terms(cloud, h);
        let effective = self.lag.min(self.window.span());
        let (value, distinct) = self.scratch.grouped_value(&centred, self.window.row_at_lag(effective)?);
        Ok(VarianceEstimate {
            time: cloud.time(),
            lag: self.lag,
            value,
            reference_generation: self.window.newest_generation() - effective,
            distinct_ancestors: distinct,
        })
    }

    pub fn step<S>(
        &mut self,
        cloud: &ParticleCloud<S>,
        resampled: bool,
        h: impl Fn(&S) -> f64,
    ) -> Result<VarianceEstimate> {
        self.advance(cloud, resampled)?;
        self.estimate(cloud, h)
    }

    /// Update the genealogy for `cloud` without computing an estimate.
    pub fn advance<S>(&mut self, cloud: &ParticleCloud<S>, resampled: bool) -> Result<()> {
        if cloud.time() != self.time + 1 {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        if resampled {
            self.window.advance(cloud.ancestors(), self.lag + 1)?;
        }
        self.time += 1;
        Ok(())
    }
}

/// Chan–Lai estimator on a persistent Eve row (`O(N)` memory).
#[derive(Debug, Clone)]
pub struct CleEstimator {
    eve: EveRow,
    time: usize,
    scratch: GroupAccumulator,
}

impl CleEstimator {
    pub fn new(n_particles: usize) -> Self {
        Self {
            eve: EveRow::new(n_particles),
            time: 0,
            scratch: GroupAccumulator::new(n_particles),
        }
    }

    pub fn eve(&self) -> &EveRow {
        &self.eve
    }

    pub fn estimate<S>(&mut self, cloud: &ParticleCloud<S>, h: impl Fn(&S) -> f64) -> Result<VarianceEstimate> {
        if cloud.time() != self.time {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        check_width(cloud, self.eve.row().len())?;
        let centred = centred_terms(cloud, h);
        let (value, distinct) = self.scratch.grouped_value(&centred, self.eve.row());
        Ok(VarianceEstimate {
            time: cloud.time(),
            lag: self.eve.generation(),
            value,
            reference_generation: 0,
            distinct_ancestors: distinct,
        })
    }

    pub fn step<S>(
        &mut self,
        cloud: &ParticleCloud<S>,
        resampled: bool,
        h: impl Fn(&S) -> f64,
    ) -> Result<VarianceEstimate> {
        self.advance(cloud, resampled)?;
        self.estimate(cloud, h)
    }

    /// Update the Eve row for `cloud` without computing an estimate.
    pub fn advance<S>(&mut self, cloud: &ParticleCloud<S>, resampled: bool) -> Result<()> {
        if cloud.time() != self.time + 1 {
            return Err(Error::TimeMismatch {
                estimator: self.time,
                cloud: cloud.time(),
            });
        }
        if resampled {
            self.eve.advance(cloud.ancestors())?;
        }
        self.time += 1;
        Ok(())
    }
}

/// Depletion flags of the Enoch indices at time `n`, indexed by generation
/// `m = 0 ..= n`.
///
/// `estimates[lag]` is the fixed-lag estimate at time `n` for
/// `lag = 0 ..= n` (generation `n - lag`); `previous[m]` are the flags at
/// time `n - 1` (empty at `n = 0`). Generation `m` is depleted if it was
/// depleted at `n - 1`, or if generation `m - 1` is depleted (generation
/// `-1` always is) and some smaller lag gives a strictly larger estimate.
/// Generation `n` is never depleted.
pub fn depletion_flags(estimates: &[f64], previous: &[bool]) -> Vec<bool> {
    assert!(!estimates.is_empty(), "need at least the lag-0 estimate");
    let n = estimates.len() - 1;
    assert_eq!(previous.len(), n, "previous flags must cover generations 0..n-1");
    let mut flags = Vec::with_capacity(n + 1);
    let mut predecessor_depleted = true;
    for m in 0..=n {
        let lag = n - m;
        let depleted = if m == n {
            false
        } else if previous[m] {
            true
        } else {
            predecessor_depleted && estimates[..lag].iter().any(|&other| estimates[lag] < other)
        };
        flags.push(depleted);
        predecessor_depleted = depleted;
    }
    flags
}
