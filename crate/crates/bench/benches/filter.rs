use std::hint::black_box;

use alvar_core::models::{bootstrap_adapter, simulate_ssm};
use alvar_core::rng::stream_rng;
use alvar_core::smc::{apf_step, init_filter};
use alvar_core::variance::{cle, lag_estimate};
use alvar_core::{AlvarState, EnochWindow, FixedLagEstimator, StochasticVolatility, SvParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const STEPS: usize = 200;

fn sv_record() -> (StochasticVolatility, Vec<f64>) {
    let sv = StochasticVolatility::new(SvParams::REFERENCE).unwrap();
    let ys = simulate_ssm(&sv, STEPS, &mut stream_rng(1, 0)).observations;
    (sv, ys)
}

fn bench_apf_step(c: &mut Criterion) {
    let (sv, ys) = sv_record();
    let model = bootstrap_adapter(&sv, &ys);
    let mut group = c.benchmark_group("apf_step");
    for n in [1_000usize, 10_000] {
        let mut rng = stream_rng(2, 0);
        let cloud = init_filter(&model, n, &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &cloud, |b, cloud| {
            b.iter(|| apf_step(&model, black_box(cloud), &mut rng).unwrap())
        });
    }
    group.finish();
}

// Full filter plus estimator runs of STEPS steps.
fn bench_estimators(c: &mut Criterion) {
    let (sv, ys) = sv_record();
    let model = bootstrap_adapter(&sv, &ys);
    let n = 1_000;
    let mut group = c.benchmark_group("filter_with_estimator");
    group.sample_size(10);

    group.bench_function("alvar", |b| {
        b.iter(|| {
            let mut rng = stream_rng(3, 0);
            let mut cloud = init_filter(&model, n, &mut rng).unwrap();
            let mut alvar = AlvarState::new(n).unwrap();
            alvar.initial_estimate(&cloud, |x| *x).unwrap();
            for _ in 0..STEPS {
                cloud = apf_step(&model, &cloud, &mut rng).unwrap();
                black_box(alvar.step(&cloud, |x| *x).unwrap());
            }
        })
    });

    for lag in [14usize, 24] {
        group.bench_with_input(BenchmarkId::new("fixed_lag", lag), &lag, |b, &lag| {
            b.iter(|| {
                let mut rng = stream_rng(3, 0);
                let mut cloud = init_filter(&model, n, &mut rng).unwrap();
                let mut est = FixedLagEstimator::new(n, lag).unwrap();
                for _ in 0..STEPS {
                    cloud = apf_step(&model, &cloud, &mut rng).unwrap();
                    black_box(est.step(&cloud, true, |x| *x).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn bench_grouping(c: &mut Criterion) {
    let (sv, ys) = sv_record();
    let model = bootstrap_adapter(&sv, &ys);
    let n = 10_000;
    let mut rng = stream_rng(4, 0);
    let mut cloud = init_filter(&model, n, &mut rng).unwrap();
    let mut window = EnochWindow::new(n).unwrap();
    for _ in 0..50 {
        cloud = apf_step(&model, &cloud, &mut rng).unwrap();
        window.advance(cloud.ancestors(), usize::MAX).unwrap();
    }
    let mut group = c.benchmark_group("grouped_estimate");
    group.bench_function("cle", |b| b.iter(|| cle(black_box(&cloud), &window, |x| *x).unwrap()));
    group.bench_function("lag_10", |b| {
        b.iter(|| lag_estimate(black_box(&cloud), &window, 10, |x| *x).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_apf_step, bench_estimators, bench_grouping);
criterion_main!(benches);
