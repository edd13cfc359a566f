//! Replicate studies built on the bootstrap filter.
//!
//! Random streams: the single comparison run uses [`MAIN_STREAM`], study
//! replicate `r` uses stream `1 + r` and brute-force replicate `k` uses
//! `BRUTE_FORCE_STREAM_BASE + k`, all under the master seed. Replicates run
//! in parallel and are reduced in replicate order, so results do not depend
//! on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genealogy::AncestryBuffer;
use crate::models::{bootstrap_adapter, kalman_filter, simulate_ssm, Bootstrap, Trajectory};
use crate::numeric::{least_squares, mean_and_variance, quantile, LinearFit};
use crate::rng::{stream_rng, SmcRng, BRUTE_FORCE_STREAM_BASE, MAIN_STREAM};
use crate::smc::{ParticleFilter, ResamplingPolicy};
use crate::variance::{centred_terms, AlvarState, CleEstimator, FixedLagEstimator, GroupAccumulator};

use super::config::{EstimatorKind, ExperimentConfig, Ssm, TestFunction};

/// Upper 2.5% point of the standard normal.
pub const NORMAL_QUANTILE_975: f64 = 1.959964;

/// Everything a study needs besides the config: the built model, the
/// observation record and the resampling policy.
#[derive(Debug, Clone)]
pub struct Setup {
    pub ssm: Ssm,
    pub observations: Vec<f64>,
    pub policy: ResamplingPolicy,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            ssm: cfg.model.build()?,
            observations: cfg.observations()?,
            policy: cfg.resampling.policy()?,
        })
    }

    fn filter(&self, n_particles: usize, rng: SmcRng) -> Result<ParticleFilter<Bootstrap<'_, Ssm>>> {
        ParticleFilter::new(
            bootstrap_adapter(&self.ssm, &self.observations),
            n_particles,
            self.policy.clone(),
            rng,
        )
    }

    fn check_steps(&self, steps: usize) -> Result<()> {
        if self.observations.len() < steps + 1 {
            return Err(Error::Config(format!(
                "{steps} steps need {} observations, have {}",
                steps + 1,
                self.observations.len()
            )));
        }
        Ok(())
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> SmcRng {
    stream_rng(seed, 1 + replicate as u64)
}

/// Simulated states and observations `0 ..= steps` from the data seed.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let ssm = cfg.model.build()?;
    let mut rng = stream_rng(cfg.data.seed, MAIN_STREAM);
    Ok(simulate_ssm(&ssm, cfg.steps, &mut rng))
}

/// One row of a plain filter run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRow {
    pub n: usize,
    pub estimate: f64,
    pub ess: f64,
    pub resampled: bool,
}

/// A single filter run on the main stream, one row per time.
pub fn run_filter(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<FilterRow>> {
    setup.check_steps(cfg.steps)?;
    let h = cfg.test_function;
    let mut pf = setup.filter(cfg.particles, stream_rng(cfg.seed, MAIN_STREAM))?;
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    for n in 0..=cfg.steps {
        if n > 0 {
            pf.step()?;
        }
        rows.push(FilterRow {
            n,
            estimate: pf.cloud().estimate(|x| h.eval(*x)),
            ess: pf.cloud().ess(),
            resampled: pf.last_resampled(),
        });
    }
    Ok(rows)
}

/// Filter estimates at the checkpoints of one independent run.
fn checkpoint_estimates(cfg: &ExperimentConfig, setup: &Setup, rng: SmcRng) -> Result<Vec<f64>> {
    let h = cfg.test_function;
    let mut pf = setup.filter(cfg.particles, rng)?;
    let mut out = Vec::new();
    for n in 0..=cfg.steps {
        if n > 0 {
            pf.step()?;
        }
        if cfg.is_checkpoint(n) {
            out.push(pf.cloud().estimate(|x| h.eval(*x)));
        }
    }
    Ok(out)
}

/// Brute-force reference at the checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub times: Vec<usize>,
    /// `N` times the sample variance of the replicate estimates.
    pub variance: Vec<f64>,
    /// Mean of the replicate estimates.
    pub mean: Vec<f64>,
    pub replicates: usize,
}

/// `N` times the sample variance of the filter estimate over `replicates`
/// independent runs, at each checkpoint.
pub fn brute_force_variance(cfg: &ExperimentConfig, setup: &Setup, replicates: usize) -> Result<BruteForce> {
    if replicates < 2 {
        return Err(Error::Config(format!(
            "brute force needs at least two replicates, got {replicates}"
        )));
    }
    setup.check_steps(cfg.steps)?;
    let runs = (0..replicates)
        .into_par_iter()
        .map(|k| checkpoint_estimates(cfg, setup, stream_rng(cfg.seed, BRUTE_FORCE_STREAM_BASE + k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let times = cfg.checkpoints();
    let n_particles = cfg.particles as f64;
    let mut variance = Vec::with_capacity(times.len());
    let mut mean = Vec::with_capacity(times.len());
    let mut column = Vec::with_capacity(replicates);
    for c in 0..times.len() {
        column.clear();
        column.extend(runs.iter().map(|r| r[c]));
        let (m, v) = mean_and_variance(&column).expect("at least two replicates");
        mean.push(m);
        variance.push(n_particles * v);
    }
    Ok(BruteForce {
        times,
        variance,
        mean,
        replicates,
    })
}

/// One checkpoint of a comparison run. `None` marks estimators that were
/// not requested.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub n: usize,
    pub estimate: f64,
    pub var_alvar: Option<f64>,
    pub lag: Option<usize>,
    pub var_cle: Option<f64>,
    /// In the order of [`Comparison::fixed_lags`].
    pub var_fixed: Vec<f64>,
    pub ess: f64,
    pub resampled: bool,
    pub brute_force: Option<f64>,
    pub distinct_alvar: Option<usize>,
    pub distinct_eve: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub fixed_lags: Vec<usize>,
    pub records: Vec<StudyRecord>,
    /// ALVar lag at every time (empty unless ALVar was requested).
    pub lags: Vec<usize>,
    pub resampling_count: usize,
    pub cap_hits: usize,
}

/// All requested estimators maintained on one filter run.
struct EstimatorBank {
    alvar: Option<AlvarState>,
    cle: Option<CleEstimator>,
    fixed: Vec<FixedLagEstimator>,
}

impl EstimatorBank {
    fn new(cfg: &ExperimentConfig, n_particles: usize) -> Result<Self> {
        let alvar = if cfg.wants(EstimatorKind::Alvar) {
            Some(AlvarState::new(n_particles)?.with_max_lag(cfg.max_lag))
        } else {
            None
        };
        let cle = cfg.wants(EstimatorKind::Cle).then(|| CleEstimator::new(n_particles));
        let fixed = cfg
            .fixed_lags()
            .into_iter()
            .map(|lag| FixedLagEstimator::new(n_particles, lag))
            .collect::<Result<_>>()?;
        Ok(Self { alvar, cle, fixed })
    }
}

/// One filter run on the main stream with every requested estimator;
/// records are emitted at the checkpoints. The brute-force column is filled
/// when `brute_force_replicates >= 2`.
pub fn run_comparison(cfg: &ExperimentConfig, setup: &Setup) -> Result<Comparison> {
    setup.check_steps(cfg.steps)?;
    let h = cfg.test_function;
    let eval = |x: &f64| h.eval(*x);
    let mut pf = setup.filter(cfg.particles, stream_rng(cfg.seed, MAIN_STREAM))?;
    let mut bank = EstimatorBank::new(cfg, cfg.particles)?;
    let mut records = Vec::new();
    let mut lags = Vec::new();
    for n in 0..=cfg.steps {
        let resampled = if n > 0 { pf.step()? } else { false };
        let cloud = pf.cloud();
        let alvar = match bank.alvar.as_mut() {
            Some(state) if n == 0 => Some(state.initial_estimate(cloud, eval)?),
            Some(state) => Some(state.adaptive_step(cloud, resampled, eval)?),
            None => None,
        };
        if let Some(est) = &alvar {
            lags.push(est.lag);
        }
        if n > 0 {
            if let Some(cle) = bank.cle.as_mut() {
                cle.advance(cloud, resampled)?;
            }
            for f in bank.fixed.iter_mut() {
                f.advance(cloud, resampled)?;
            }
        }
        if !cfg.is_checkpoint(n) {
            continue;
        }
        let cle = bank.cle.as_mut().map(|c| c.estimate(cloud, eval)).transpose()?;
        let var_fixed = bank
            .fixed
            .iter_mut()
            .map(|f| f.estimate(cloud, eval).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        records.push(StudyRecord {
            n,
            estimate: cloud.estimate(eval),
            var_alvar: alvar.map(|e| e.value),
            lag: alvar.map(|e| e.lag),
            var_cle: cle.map(|e| e.value),
            var_fixed,
            ess: cloud.ess(),
            resampled,
            brute_force: None,
            distinct_alvar: alvar.map(|e| e.distinct_ancestors),
            distinct_eve: cle.map(|e| e.distinct_ancestors),
        });
    }
    if cfg.brute_force_replicates >= 2 {
        let bf = brute_force_variance(cfg, setup, cfg.brute_force_replicates)?;
        for (record, value) in records.iter_mut().zip(&bf.variance) {
            record.brute_force = Some(*value);
        }
    }
    let (resampling_count, cap_hits) = bank
        .alvar
        .as_ref()
        .map_or((0, 0), |s| (s.resampling_count(), s.cap_hits()));
    Ok(Comparison {
        fixed_lags: cfg.fixed_lags(),
        records,
        lags,
        resampling_count,
        cap_hits,
    })
}

/// `(1/M) sum_j (estimate_j[lag] - reference)^2` for every lag present in
/// all replicates.
pub fn mse_table(estimates: &[Vec<f64>], reference: f64) -> Vec<f64> {
    let Some(width) = estimates.iter().map(Vec::len).min() else {
        return Vec::new();
    };
    let m = estimates.len() as f64;
    (0..width)
        .map(|lag| estimates.iter().map(|e| (e[lag] - reference).powi(2)).sum::<f64>() / m)
        .collect()
}

/// Index of the smallest value, ties going to the smallest index; NaNs are
/// skipped.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-checkpoint result of the empirical MSE study.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCheckpoint {
    pub n: usize,
    pub reference: f64,
    /// MSE indexed by lag.
    pub mse: Vec<f64>,
    pub optimal_lag: Option<usize>,
    /// ALVar's chosen lag in each replicate.
    pub alvar_lags: Vec<usize>,
    pub alvar_q1: f64,
    pub alvar_median: f64,
    pub alvar_q3: f64,
}

impl MseCheckpoint {
    pub fn optimal_within_iqr(&self) -> Option<bool> {
        self.optimal_lag
            .map(|l| (self.alvar_q1..=self.alvar_q3).contains(&(l as f64)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseStudy {
    pub checkpoints: Vec<MseCheckpoint>,
    /// Fraction of checkpoints with `n > 0` whose MSE-optimal lag lies in
    /// the interquartile range of ALVar's lags.
    pub within_iqr_fraction: Option<f64>,
}

/// Estimates for every lag `0 ..= max_lag` and ALVar's lag, per checkpoint.
fn lag_profile(cfg: &ExperimentConfig, setup: &Setup, rng: SmcRng) -> Result<Vec<(Vec<f64>, usize)>> {
    let h = cfg.test_function;
    let eval = |x: &f64| h.eval(*x);
    let mut pf = setup.filter(cfg.particles, rng)?;
    let mut alvar = AlvarState::new(cfg.particles)?.with_max_lag(cfg.max_lag);
    let mut history = AncestryBuffer::new(cfg.particles, cfg.mse_lags);
    let mut acc = GroupAccumulator::new(cfg.particles);
    let mut out = Vec::new();
    for n in 0..=cfg.steps {
        let chosen = if n == 0 {
            alvar.initial_estimate(pf.cloud(), eval)?
        } else {
            let resampled = pf.step()?;
            if resampled {
                history.push(pf.cloud().ancestors())?;
            }
            alvar.adaptive_step(pf.cloud(), resampled, eval)?
        };
        if cfg.is_checkpoint(n) {
            let centred = centred_terms(pf.cloud(), eval);
            let mut values = Vec::with_capacity(history.available_lags() + 1);
            history.for_each_row(|_, row| values.push(acc.grouped_value(&centred, row).0));
            out.push((values, chosen.lag));
        }
    }
    Ok(out)
}

/// Empirical MSE of the fixed-lag estimates against the brute-force
/// reference, over `replicates` runs, with the MSE-optimal lag per
/// checkpoint (ties to the smallest lag) and ALVar's lag distribution.
pub fn empirical_mse_study(cfg: &ExperimentConfig, setup: &Setup) -> Result<MseStudy> {
    setup.check_steps(cfg.steps)?;
    let reference = brute_force_variance(cfg, setup, cfg.brute_force_replicates)?;
    mse_study_with_reference(cfg, setup, &reference.variance)
}

/// [`empirical_mse_study`] against a given reference, one value per
/// checkpoint.
pub fn mse_study_with_reference(cfg: &ExperimentConfig, setup: &Setup, reference: &[f64]) -> Result<MseStudy> {
    setup.check_steps(cfg.steps)?;
    let times = cfg.checkpoints();
    if reference.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: reference.len(),
        });
    }
    let runs = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| lag_profile(cfg, setup, replicate_rng(cfg.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut checkpoints = Vec::with_capacity(times.len());
    for (c, (&n, &reference)) in times.iter().zip(reference).enumerate() {
        let estimates: Vec<Vec<f64>> = runs.iter().map(|r| r[c].0.clone()).collect();
        let alvar_lags: Vec<usize> = runs.iter().map(|r| r[c].1).collect();
        let as_f64: Vec<f64> = alvar_lags.iter().map(|&l| l as f64).collect();
        let mse = mse_table(&estimates, reference);
        checkpoints.push(MseCheckpoint {
            n,
            reference,
            optimal_lag: argmin_first(&mse),
            mse,
            alvar_q1: quantile(&as_f64, 0.25).unwrap_or(f64::NAN),
            alvar_median: quantile(&as_f64, 0.5).unwrap_or(f64::NAN),
            alvar_q3: quantile(&as_f64, 0.75).unwrap_or(f64::NAN),
            alvar_lags,
        });
    }
    let hits: Vec<bool> = checkpoints
        .iter()
        .filter(|c| c.n > 0)
        .filter_map(MseCheckpoint::optimal_within_iqr)
        .collect();
    let within_iqr_fraction =
        (!hits.is_empty()).then(|| hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64);
    Ok(MseStudy {
        checkpoints,
        within_iqr_fraction,
    })
}

/// Mean, median and maximum of a lag trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagStats {
    pub mean: f64,
    pub median: f64,
    pub max: usize,
}

pub fn lag_stats(lags: &[usize]) -> Option<LagStats> {
    let values: Vec<f64> = lags.iter().map(|&l| l as f64).collect();
    Some(LagStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile(&values, 0.5)?,
        max: *lags.iter().max()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagRun {
    pub particles: usize,
    pub replicate: usize,
    pub stats: LagStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagSummary {
    pub particles: usize,
    /// Average of the per-run mean lags.
    pub mean_lag: f64,
    /// Median over all retained lags of all runs.
    pub median_lag: f64,
    pub max_lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagStudy {
    pub runs: Vec<LagRun>,
    pub summaries: Vec<LagSummary>,
    /// Mean lag against `log10 N`; absent with fewer than three distinct N.
    pub fit: Option<LinearFit>,
}

/// ALVar's lag trace `lambda_0 ..= lambda_steps` for one run.
pub fn alvar_lag_trace(
    cfg: &ExperimentConfig,
    setup: &Setup,
    n_particles: usize,
    rng: SmcRng,
) -> Result<Vec<usize>> {
    setup.check_steps(cfg.steps)?;
    let h = cfg.test_function;
    let eval = |x: &f64| h.eval(*x);
    let mut pf = setup.filter(n_particles, rng)?;
    let mut alvar = AlvarState::new(n_particles)?.with_max_lag(cfg.max_lag);
    let mut lags = Vec::with_capacity(cfg.steps + 1);
    lags.push(alvar.initial_estimate(pf.cloud(), eval)?.lag);
    for _ in 0..cfg.steps {
        let resampled = pf.step()?;
        lags.push(alvar.adaptive_step(pf.cloud(), resampled, eval)?.lag);
    }
    Ok(lags)
}

/// Lag distribution per particle count, excluding the first `burn_in` lags
/// of each run, and a least-squares fit of the mean lag against `log10 N`.
pub fn lag_scaling_study(cfg: &ExperimentConfig, setup: &Setup) -> Result<LagStudy> {
    if cfg.burn_in > cfg.steps {
        return Err(Error::Config(format!(
            "burn_in {} leaves no lags out of {} steps",
            cfg.burn_in, cfg.steps
        )));
    }
    let counts = if cfg.particle_counts.is_empty() {
        vec![cfg.particles]
    } else {
        cfg.particle_counts.clone()
    };
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(n, r)| alvar_lag_trace(cfg, setup, n, replicate_rng(cfg.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(jobs.len());
    let mut summaries = Vec::with_capacity(counts.len());
    for (k, &particles) in counts.iter().enumerate() {
        let block = &traces[k * cfg.replicates..(k + 1) * cfg.replicates];
        let mut pooled = Vec::new();
        let mut means = Vec::with_capacity(block.len());
        for (replicate, trace) in block.iter().enumerate() {
            let kept = &trace[cfg.burn_in..];
            let stats = lag_stats(kept).expect("non-empty after burn-in");
            means.push(stats.mean);
            pooled.extend_from_slice(kept);
            runs.push(LagRun {
                particles,
                replicate,
                stats,
            });
        }
        let pooled_stats = lag_stats(&pooled).expect("non-empty");
        summaries.push(LagSummary {
            particles,
            mean_lag: means.iter().sum::<f64>() / means.len() as f64,
            median_lag: pooled_stats.median,
            max_lag: pooled_stats.max,
        });
    }
    Ok(LagStudy {
        fit: scaling_fit(&summaries),
        runs,
        summaries,
    })
}

/// Least-squares fit of mean lag against `log10 N`, when at least three
/// distinct particle counts are present.
pub fn scaling_fit(summaries: &[LagSummary]) -> Option<LinearFit> {
    let mut distinct: Vec<usize> = summaries.iter().map(|s| s.particles).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    let x: Vec<f64> = summaries.iter().map(|s| (s.particles as f64).log10()).collect();
    let y: Vec<f64> = summaries.iter().map(|s| s.mean_lag).collect();
    least_squares(&x, &y)
}

/// Whether each interval `estimate ± z sqrt(variance / N)` misses `truth`.
pub fn interval_misses(
    estimates: &[f64],
    variances: &[f64],
    truth: &[f64],
    n_particles: usize,
    z: f64,
) -> Vec<bool> {
    assert_eq!(estimates.len(), variances.len());
    assert_eq!(estimates.len(), truth.len());
    estimates
        .iter()
        .zip(variances)
        .zip(truth)
        .map(|((e, v), t)| {
            let half = z * (v / n_particles as f64).sqrt();
            !((e - t).abs() <= half)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfintStudy {
    pub times: Vec<usize>,
    /// Fraction of replicates whose interval missed the Kalman mean.
    pub failure_rates: Vec<f64>,
    /// Average of the per-time failure rates.
    pub overall: f64,
    pub replicates: usize,
}

/// Failure rates of ALVar-based 95% intervals for the filter mean of the
/// linear Gaussian model, against the Kalman filter, at every time.
pub fn confint_study(cfg: &ExperimentConfig, setup: &Setup) -> Result<ConfintStudy> {
    let Ssm::Lg(lg) = setup.ssm else {
        return Err(Error::Config("confint-study needs the linear Gaussian model".into()));
    };
    if cfg.test_function != TestFunction::Identity {
        return Err(Error::Config("confint-study is defined for test_function = \"id\"".into()));
    }
    setup.check_steps(cfg.steps)?;
    let truth = kalman_filter(&lg, &setup.observations[..=cfg.steps]).means;
    let misses = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut pf = setup.filter(cfg.particles, replicate_rng(cfg.seed, r))?;
            let mut alvar = AlvarState::new(cfg.particles)?.with_max_lag(cfg.max_lag);
            let mut estimates = Vec::with_capacity(cfg.steps + 1);
            let mut variances = Vec::with_capacity(cfg.steps + 1);
            for n in 0..=cfg.steps {
                let est = if n == 0 {
                    alvar.initial_estimate(pf.cloud(), |x| *x)?
                } else {
                    let resampled = pf.step()?;
                    alvar.adaptive_step(pf.cloud(), resampled, |x| *x)?
                };
                estimates.push(pf.cloud().estimate(|x| *x));
                variances.push(est.value);
            }
            Ok(interval_misses(
                &estimates,
                &variances,
                &truth,
                cfg.particles,
                NORMAL_QUANTILE_975,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise_misses(&misses))
}

/// Per-time failure rates from per-replicate miss indicators.
pub fn summarise_misses(misses: &[Vec<bool>]) -> ConfintStudy {
    let width = misses.iter().map(Vec::len).min().unwrap_or(0);
    let m = misses.len() as f64;
    let failure_rates: Vec<f64> = (0..width)
        .map(|n| misses.iter().filter(|r| r[n]).count() as f64 / m)
        .collect();
    let overall = if failure_rates.is_empty() {
        f64::NAN
    } else {
        failure_rates.iter().sum::<f64>() / failure_rates.len() as f64
    };
    ConfintStudy {
        times: (0..width).collect(),
        failure_rates,
        overall,
        replicates: misses.len(),
    }
}
