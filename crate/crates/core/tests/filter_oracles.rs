//! Statistical and exact oracles for the filter, the resampler and the models.

use alvar_core::auxiliary_fk::{bootstrap_step, extend, extended_init};
use alvar_core::harness::studies::Setup;
use alvar_core::harness::{brute_force_variance, ExperimentConfig, ModelConfig};
use alvar_core::models::{bootstrap_adapter, kalman_filter, simulate_ssm, StateSpaceModel};
use alvar_core::rng::stream_rng;
use alvar_core::smc::{apf_step, categorical_resample, ess, init_filter};
use alvar_core::{LgParams, LinearGaussian, ModelSpec, ParticleFilter, ResamplingPolicy, StochasticVolatility, SvParams};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn categorical_draws_pass_chi_square() {
    let weights = [0.05, 0.2, 0.0, 0.4, 0.15, 0.2];
    let draws = 100_000;
    let mut rng = stream_rng(17, 0);
    let picks = categorical_resample(&weights, draws, &mut rng).unwrap();
    let mut counts = [0usize; 6];
    for p in picks {
        counts[p] += 1;
    }
    assert_eq!(counts[2], 0);
    let stat: f64 = weights
        .iter()
        .zip(counts)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| {
            let expected = w * draws as f64;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(4.0).unwrap().cdf(stat);
    assert!(p_value > 0.001, "chi-square {stat}, p = {p_value}");
}

proptest! {
    #[test]
    fn ess_lies_between_one_and_n(lw in prop::collection::vec(-700.0f64..700.0, 1..200)) {
        let e = ess(&lw);
        prop_assert!(e >= 1.0 && e <= lw.len() as f64);
        let shifted: Vec<f64> = lw.iter().map(|l| l - 123.0).collect();
        prop_assert!((ess(&shifted) - e).abs() <= 1e-9 * e);
    }

    #[test]
    fn resampled_indices_have_positive_weight(
        w in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..50),
        seed in any::<u64>(),
    ) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let picks = categorical_resample(&w, 64, &mut stream_rng(seed, 0)).unwrap();
        prop_assert!(picks.iter().all(|&k| w[k] > 0.0));
    }
}

fn lg_record(steps: usize, seed: u64) -> (LinearGaussian, Vec<f64>) {
    let lg = LinearGaussian::stationary(LgParams::REFERENCE).unwrap();
    let ys = simulate_ssm(&lg, steps, &mut stream_rng(seed, 0)).observations;
    (lg, ys)
}

#[test]
fn time_zero_mean_matches_kalman() {
    let (lg, ys) = lg_record(0, 5);
    let kalman = kalman_filter(&lg, &ys);
    let model = bootstrap_adapter(&lg, &ys);
    let n = 10_000;
    let cloud = init_filter(&model, n, &mut stream_rng(6, 0)).unwrap();
    let mean = cloud.estimate(|x| *x);
    // Self-normalised importance sampling: asymptotic variance is
    // E[w^2 (x - m)^2] / E[w]^2, estimated from the weights themselves.
    let w = cloud.normalised_weights();
    let var: f64 = n as f64 * w.iter().zip(cloud.particles()).map(|(w, x)| (w * (x - mean)).powi(2)).sum::<f64>();
    let se = (var / n as f64).sqrt();
    assert!(
        (mean - kalman.means[0]).abs() < 4.0 * se,
        "mean {mean}, Kalman {}, se {se}",
        kalman.means[0]
    );
}

#[test]
fn filter_means_track_kalman_over_a_hundred_steps() {
    let steps = 100;
    let n = 10_000;
    let mut cfg = ExperimentConfig::new(ModelConfig::Lg(LgParams::REFERENCE), n, steps);
    cfg.data.seed = 8;
    cfg.seed = 9;
    cfg.checkpoint_stride = 1;
    let setup = Setup::from_config(&cfg).unwrap();
    let Setup { ssm: _, observations, .. } = &setup;
    let lg = LinearGaussian::stationary(LgParams::REFERENCE).unwrap();
    let kalman = kalman_filter(&lg, observations);
    let reference = brute_force_variance(&cfg, &setup, 40).unwrap();

    let model = bootstrap_adapter(&lg, observations);
    let mut pf = ParticleFilter::new(model, n, ResamplingPolicy::Always, stream_rng(10, 0)).unwrap();
    for t in 0..=steps {
        if t > 0 {
            pf.step().unwrap();
        }
        let se = (reference.variance[t] / n as f64).sqrt();
        let mean = pf.cloud().estimate(|x| *x);
        assert!(
            (mean - kalman.means[t]).abs() < 5.0 * se,
            "n = {t}: mean {mean}, Kalman {}, se {se}",
            kalman.means[t]
        );
    }
}

/// A model whose adjustment multiplier is far from constant, so selection
/// weights and filter weights differ.
fn tilted_model() -> ModelSpec<f64> {
    ModelSpec::new(
        |rng| Distribution::<f64>::sample(&StandardNormal, rng),
        |x: &f64| -0.5 * (x - 0.3).powi(2),
        |_, x: &f64, rng| 0.8 * x + 0.5 * Distribution::<f64>::sample(&StandardNormal, rng),
        |n, _, y: &f64| -0.5 * (y - 0.1 * n as f64).powi(2) / 0.7,
    )
    .with_log_adjustment(|n, x| -0.25 * (x - 0.05 * n as f64).powi(2))
}

#[test]
fn apf_and_extended_bootstrap_are_coupled_with_adjustment() {
    let model = tilted_model();
    let ext = extend(&model);
    let n = 128;
    let mut rng_apf = stream_rng(21, 0);
    let mut rng_ext = stream_rng(21, 0);
    let mut apf = init_filter(&model, n, &mut rng_apf).unwrap();
    let mut boot = extended_init(&ext, n, &mut rng_ext).unwrap();
    for t in 0..=40 {
        if t > 0 {
            apf = apf_step(&model, &apf, &mut rng_apf).unwrap();
            boot = bootstrap_step(&ext, &boot, &mut rng_ext).unwrap();
            assert_eq!(apf.ancestors(), boot.ancestors(), "n = {t}");
        }
        for k in 0..n {
            let x = apf.particles()[k];
            assert_eq!(x, boot.particles()[k].current);
            let lhs = apf.log_weights()[k] + (model_adjust(&model, t, x));
            let rhs = boot.log_weights()[k];
            let (a, b) = (lhs.exp(), rhs.exp());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "n = {t}, k = {k}: {a} vs {b}");
        }
    }
}

fn model_adjust(model: &ModelSpec<f64>, t: usize, x: f64) -> f64 {
    use alvar_core::Model;
    model.log_adjustment(t, &x)
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn extended_model_marginal_matches_apf_in_distribution() {
    let model = tilted_model();
    let ext = extend(&model);
    let n = 4000;
    let mut rng_apf = stream_rng(31, 0);
    let mut rng_ext = stream_rng(32, 0);
    let mut apf = init_filter(&model, n, &mut rng_apf).unwrap();
    let mut boot = extended_init(&ext, n, &mut rng_ext).unwrap();
    for _ in 0..5 {
        apf = apf_step(&model, &apf, &mut rng_apf).unwrap();
        boot = bootstrap_step(&ext, &boot, &mut rng_ext).unwrap();
    }
    // Resample each filter by its own filter weights (omega for the APF,
    // omegabar / theta for the extended model) to obtain equally weighted
    // samples from the two approximations of the same filter.
    let apf_w = apf.normalised_weights();
    let boot_lw: Vec<f64> = boot
        .particles()
        .iter()
        .zip(boot.log_weights())
        .map(|(p, lw)| lw - model_adjust(&model, 5, p.current))
        .collect();
    let max = boot_lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let boot_w: Vec<f64> = boot_lw.iter().map(|l| (l - max).exp()).collect();
    let draws = 2000;
    let a: Vec<f64> = categorical_resample(&apf_w, draws, &mut stream_rng(33, 0))
        .unwrap()
        .into_iter()
        .map(|k| apf.particles()[k])
        .collect();
    let b: Vec<f64> = categorical_resample(&boot_w, draws, &mut stream_rng(34, 0))
        .unwrap()
        .into_iter()
        .map(|k| boot.particles()[k].current)
        .collect();
    let d = ks_statistic(a, b);
    // critical value at level 0.001
    let critical = 1.949 * ((2 * draws) as f64 / (draws * draws) as f64).sqrt();
    assert!(d < critical, "KS statistic {d} >= {critical}");
}

#[test]
fn sv_transition_keeps_the_stationary_variance() {
    let sv = StochasticVolatility::new(SvParams::REFERENCE).unwrap();
    let expected = SvParams::REFERENCE.stationary_variance();
    assert!((expected - 0.5513).abs() < 1e-3);
    let mut rng = stream_rng(41, 0);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            let mut x = sv.sample_initial(&mut rng);
            for _ in 0..20 {
                x = sv.sample_transition(x, &mut rng);
            }
            x
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((var - 0.5513).abs() < 0.03 * 0.5513, "variance {var}");
}

#[test]
fn lg_observation_noise_is_centred() {
    let lg = LinearGaussian::stationary(LgParams::REFERENCE).unwrap();
    let mut rng = stream_rng(42, 0);
    let m = 100_000;
    let noise: Vec<f64> = (0..m)
        .map(|_| {
            let x = lg.sample_initial(&mut rng);
            lg.sample_observation(x, &mut rng) - LgParams::REFERENCE.b * x
        })
        .collect();
    let mean = noise.iter().sum::<f64>() / m as f64;
    let sd = LgParams::REFERENCE.sigma_v / (m as f64).sqrt();
    assert!(mean.abs() < 4.0 * sd, "noise mean {mean}");
}
