use alvar_core::harness::studies::{alvar_lag_trace, Setup};
use alvar_core::harness::{
    brute_force_variance, confint_study, lag_scaling_study, run_comparison, EstimatorKind, ExperimentConfig,
    ModelConfig, ResamplingConfig, TestFunction,
};
use alvar_core::rng::stream_rng;
use alvar_core::{LgParams, SvParams};

fn sv(particles: usize, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ModelConfig::Sv(SvParams::REFERENCE), particles, steps);
    cfg.seed = 5;
    cfg.data.seed = 6;
    cfg
}

#[test]
fn brute_force_is_stable_under_doubling() {
    let mut cfg = ExperimentConfig::new(ModelConfig::Lg(LgParams::REFERENCE), 256, 10);
    cfg.checkpoint_stride = 5;
    let setup = Setup::from_config(&cfg).unwrap();
    let k2000 = brute_force_variance(&cfg, &setup, 2000).unwrap();
    let k4000 = brute_force_variance(&cfg, &setup, 4000).unwrap();
    for (a, b) in k2000.variance.iter().zip(&k4000.variance) {
        assert!((a - b).abs() / b < 0.10, "{a} vs {b}");
    }
}

#[test]
fn replicate_studies_do_not_depend_on_thread_count() {
    let mut cfg = ExperimentConfig::new(ModelConfig::Lg(LgParams::REFERENCE), 100, 40);
    cfg.replicates = 6;
    cfg.checkpoint_stride = 10;
    let setup = Setup::from_config(&cfg).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    brute_force_variance(&cfg, &setup, 8).unwrap(),
                    confint_study(&cfg, &setup).unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn comparison_is_deterministic_and_dominates_fixed_lags() {
    let mut cfg = sv(200, 120);
    cfg.checkpoint_stride = 1;
    cfg.estimators = vec![
        EstimatorKind::Alvar,
        EstimatorKind::Cle,
        EstimatorKind::FixedLag(0),
        EstimatorKind::FixedLag(1),
        EstimatorKind::FixedLag(3),
    ];
    let setup = Setup::from_config(&cfg).unwrap();
    let cmp = run_comparison(&cfg, &setup).unwrap();
    assert_eq!(cmp, run_comparison(&cfg, &setup).unwrap());
    assert_eq!(cmp.records.len(), 121);
    for (r, record) in cmp.records.iter().enumerate() {
        let lag = record.lag.unwrap();
        let alvar = record.var_alvar.unwrap();
        assert_eq!(cmp.lags[r], lag);
        for (fixed_lag, value) in cmp.fixed_lags.iter().zip(&record.var_fixed) {
            // candidates at this step range over 0 ..= previous lag + 1
            let bound = if r == 0 { 0 } else { cmp.lags[r - 1] + 1 };
            if *fixed_lag <= bound && r > 0 {
                assert!(alvar >= *value, "n = {r}: alvar {alvar} < fixed_lag({fixed_lag}) {value}");
            }
        }
        if r > 0 {
            assert!(lag <= cmp.lags[r - 1] + 1);
        }
    }
    assert_eq!(cmp.resampling_count, 120);
}

#[test]
fn adaptive_comparison_resamples_less() {
    let mut cfg = sv(300, 200);
    cfg.resampling = ResamplingConfig::Ess(0.3);
    let setup = Setup::from_config(&cfg).unwrap();
    let cmp = run_comparison(&cfg, &setup).unwrap();
    assert!(cmp.resampling_count < 200);
    assert!(cmp.resampling_count > 0);
    // the lag counts selection generations, so it cannot exceed them
    assert!(cmp.lags.iter().all(|&l| l <= cmp.resampling_count));
}

#[test]
fn constant_test_function_gives_zero_everywhere() {
    let mut cfg = sv(64, 60);
    cfg.test_function = TestFunction::Constant(1.5);
    cfg.estimators = vec![EstimatorKind::Alvar, EstimatorKind::Cle, EstimatorKind::FixedLag(4)];
    cfg.brute_force_replicates = 3;
    cfg.checkpoint_stride = 10;
    let setup = Setup::from_config(&cfg).unwrap();
    let cmp = run_comparison(&cfg, &setup).unwrap();
    for r in &cmp.records {
        assert_eq!(r.estimate, 1.5);
        assert_eq!(r.var_alvar, Some(0.0));
        assert_eq!(r.var_cle, Some(0.0));
        assert_eq!(r.var_fixed, vec![0.0]);
        assert_eq!(r.brute_force, Some(0.0));
    }
}

#[test]
fn lag_trace_starts_at_zero_and_grows_by_at_most_one() {
    let cfg = sv(150, 300);
    let setup = Setup::from_config(&cfg).unwrap();
    let lags = alvar_lag_trace(&cfg, &setup, 150, stream_rng(1, 2)).unwrap();
    assert_eq!(lags.len(), 301);
    assert_eq!(lags[0], 0);
    assert!(lags.windows(2).all(|w| w[1] <= w[0] + 1));
}

#[test]
fn lag_study_reports_fit_for_three_counts() {
    let mut cfg = sv(0, 150);
    cfg.particles = 50;
    cfg.particle_counts = vec![50, 100, 200];
    cfg.replicates = 2;
    cfg.burn_in = 20;
    let setup = Setup::from_config(&cfg).unwrap();
    let study = lag_scaling_study(&cfg, &setup).unwrap();
    assert_eq!(study.summaries.len(), 3);
    assert_eq!(study.runs.len(), 6);
    let fit = study.fit.unwrap();
    assert!((0.0..=1.0).contains(&fit.r_squared));
}
