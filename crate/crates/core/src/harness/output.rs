//! CSV and JSON emission.
//!
//! Floats are written in shortest round-trip form, so reruns with the same
//! config and seed produce identical bytes. Missing values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::studies::{BruteForce, Comparison, ConfintStudy, FilterRow, LagStudy, MseStudy};

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn bit(b: bool) -> String {
    u8::from(b).to_string()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header of the comparison CSV.
pub fn comparison_header(fixed_lags: &[usize]) -> Vec<String> {
    let mut header: Vec<String> = ["n", "estimate", "var_alvar", "lag", "var_cle"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(fixed_lags.iter().map(|l| format!("var_fixed_{l}")));
    header.extend(
        ["ess", "resampled", "brute_force", "distinct_alvar", "distinct_eve"]
            .iter()
            .map(|s| s.to_string()),
    );
    header
}

pub fn write_comparison(path: &Path, cmp: &Comparison) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(comparison_header(&cmp.fixed_lags))?;
    for r in &cmp.records {
        let mut row = vec![
            r.n.to_string(),
            float(r.estimate),
            opt_float(r.var_alvar),
            opt(r.lag),
            opt_float(r.var_cle),
        ];
        row.extend(r.var_fixed.iter().copied().map(float));
        row.extend([
            float(r.ess),
            bit(r.resampled),
            opt_float(r.brute_force),
            opt(r.distinct_alvar),
            opt(r.distinct_eve),
        ]);
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// `n,lag` at every time.
pub fn write_lag_trace(path: &Path, lags: &[usize]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "lag"])?;
    for (n, lag) in lags.iter().enumerate() {
        w.write_record([n.to_string(), lag.to_string()])?;
    }
    finish(w, path)
}

pub fn write_filter(path: &Path, rows: &[FilterRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "estimate", "ess", "resampled"])?;
    for r in rows {
        w.write_record([r.n.to_string(), float(r.estimate), float(r.ess), bit(r.resampled)])?;
    }
    finish(w, path)
}

pub fn write_brute_force(path: &Path, bf: &BruteForce) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "brute_force", "mean_estimate", "replicates"])?;
    for ((n, v), m) in bf.times.iter().zip(&bf.variance).zip(&bf.mean) {
        w.write_record([n.to_string(), float(*v), float(*m), bf.replicates.to_string()])?;
    }
    finish(w, path)
}

/// Long-format MSE table (`n,lag,mse`) and the per-checkpoint summary.
pub fn write_mse(table_path: &Path, optimal_path: &Path, study: &MseStudy) -> Result<()> {
    let mut w = writer(table_path)?;
    w.write_record(["n", "lag", "mse"])?;
    for c in &study.checkpoints {
        for (lag, mse) in c.mse.iter().enumerate() {
            w.write_record([c.n.to_string(), lag.to_string(), float(*mse)])?;
        }
    }
    finish(w, table_path)?;

    let mut w = writer(optimal_path)?;
    w.write_record([
        "n",
        "brute_force",
        "optimal_lag",
        "alvar_q1",
        "alvar_median",
        "alvar_q3",
        "within_iqr",
    ])?;
    for c in &study.checkpoints {
        w.write_record([
            c.n.to_string(),
            float(c.reference),
            opt(c.optimal_lag),
            float(c.alvar_q1),
            float(c.alvar_median),
            float(c.alvar_q3),
            opt(c.optimal_within_iqr().map(u8::from)),
        ])?;
    }
    finish(w, optimal_path)
}

/// ALVar's chosen lag per checkpoint and replicate, `n,replicate,lag`.
pub fn write_mse_lags(path: &Path, study: &MseStudy) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "replicate", "lag"])?;
    for c in &study.checkpoints {
        for (r, lag) in c.alvar_lags.iter().enumerate() {
            w.write_record([c.n.to_string(), r.to_string(), lag.to_string()])?;
        }
    }
    finish(w, path)
}

/// Per-run and per-N lag statistics.
pub fn write_lag_study(runs_path: &Path, summary_path: &Path, study: &LagStudy) -> Result<()> {
    let mut w = writer(runs_path)?;
    w.write_record(["particles", "replicate", "mean_lag", "median_lag", "max_lag"])?;
    for r in &study.runs {
        w.write_record([
            r.particles.to_string(),
            r.replicate.to_string(),
            float(r.stats.mean),
            float(r.stats.median),
            r.stats.max.to_string(),
        ])?;
    }
    finish(w, runs_path)?;

    let mut w = writer(summary_path)?;
    w.write_record(["particles", "log10_particles", "mean_lag", "median_lag", "max_lag"])?;
    for s in &study.summaries {
        w.write_record([
            s.particles.to_string(),
            float((s.particles as f64).log10()),
            float(s.mean_lag),
            float(s.median_lag),
            s.max_lag.to_string(),
        ])?;
    }
    finish(w, summary_path)
}

pub fn write_confint(path: &Path, study: &ConfintStudy) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "failure_rate", "replicates"])?;
    for (n, rate) in study.times.iter().zip(&study.failure_rates) {
        w.write_record([n.to_string(), float(*rate), study.replicates.to_string()])?;
    }
    finish(w, path)
}

/// Run manifest written next to the CSV outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub git_revision: String,
    pub elapsed_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `git rev-parse HEAD` of the working directory, or `"unknown"`.
pub fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}
