//! Experiment harness: configuration, replicate studies and output.

pub mod config;
pub mod output;
pub mod studies;

pub use config::{
    DataConfig, EstimatorKind, ExperimentConfig, ModelConfig, Overrides, ResamplingConfig, Ssm, TestFunction,
};
pub use studies::{
    brute_force_variance, confint_study, empirical_mse_study, lag_scaling_study, run_comparison, run_filter,
    simulate, BruteForce, Comparison, ConfintStudy, LagStudy, MseStudy, Setup, StudyRecord,
};
