//! `alvar`: run particle-filter variance studies from a TOML config.
//!
//! Every subcommand writes headered CSV files and a JSON manifest into the
//! output directory. Failures print one JSON line to stderr, e.g.
//! `{"error":"io","message":"..."}`, and exit with status 1 (2 for usage
//! errors).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use alvar_core::harness::output::{self, Manifest};
use alvar_core::harness::studies::{self, Setup};
use alvar_core::harness::{ExperimentConfig, Overrides};
use alvar_core::models::write_series;
use alvar_core::Error;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "alvar", version, about = "Adaptive-lag variance estimation studies for particle filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate states and observations from the configured model.
    Simulate(Common),
    /// Run one filter and write its estimates, ESS and resampling flags.
    Filter(Common),
    /// Brute-force variance reference over independent replicates.
    BruteForce(Common),
    /// One filter run with every configured variance estimator.
    Compare(Common),
    /// Empirical MSE of fixed-lag estimates and the MSE-optimal lag.
    MseStudy(Common),
    /// Distribution of ALVar's lag across particle counts.
    LagStudy(Common),
    /// Failure rates of ALVar confidence intervals (linear Gaussian model).
    ConfintStudy(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed (for `simulate`, the data seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter(_) => "filter",
            Command::BruteForce(_) => "brute-force",
            Command::Compare(_) => "compare",
            Command::MseStudy(_) => "mse-study",
            Command::LagStudy(_) => "lag-study",
            Command::ConfintStudy(_) => "confint-study",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Filter(c)
            | Command::BruteForce(c)
            | Command::Compare(c)
            | Command::MseStudy(c)
            | Command::LagStudy(c)
            | Command::ConfintStudy(c) => c,
        }
    }
}

fn load_config(command: &Command) -> Result<ExperimentConfig, Error> {
    let args = command.common();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let mut overrides = Overrides {
        seed: args.seed,
        particles: args.particles,
        steps: args.steps,
        output_dir: args.out.clone(),
    };
    if matches!(command, Command::Simulate(_)) {
        if let Some(seed) = overrides.seed.take() {
            cfg.data.seed = seed;
        }
    }
    cfg.apply(&overrides)?;
    Ok(cfg)
}

fn run(command: &Command) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = load_config(command)?;
    let out = cfg.output_dir.clone();
    let file = |name: &str| out.join(name);
    info!("{} with N = {}, {} steps, seed {}", command.name(), cfg.particles, cfg.steps, cfg.seed);

    let (outputs, summary) = match command {
        Command::Simulate(_) => {
            let traj = studies::simulate(&cfg)?;
            let (states, observations) = (file("states.csv"), file("observations.csv"));
            create_dir(&out)?;
            write_series(&states, "x", &traj.states)?;
            write_series(&observations, "y", &traj.observations)?;
            (vec![states, observations], json!({ "steps": cfg.steps, "data_seed": cfg.data.seed }))
        }
        Command::Filter(_) => {
            let setup = Setup::from_config(&cfg)?;
            let rows = studies::run_filter(&cfg, &setup)?;
            let path = file("filter.csv");
            output::write_filter(&path, &rows)?;
            let resamplings = rows.iter().filter(|r| r.resampled).count();
            (vec![path], json!({ "resampling_steps": resamplings }))
        }
        Command::BruteForce(_) => {
            let setup = Setup::from_config(&cfg)?;
            let k = if cfg.brute_force_replicates >= 2 {
                cfg.brute_force_replicates
            } else {
                cfg.replicates
            };
            let bf = studies::brute_force_variance(&cfg, &setup, k)?;
            let path = file("brute_force.csv");
            output::write_brute_force(&path, &bf)?;
            (vec![path], json!({ "replicates": k }))
        }
        Command::Compare(_) => {
            let setup = Setup::from_config(&cfg)?;
            let cmp = studies::run_comparison(&cfg, &setup)?;
            let (path, lags) = (file("compare.csv"), file("lags.csv"));
            output::write_comparison(&path, &cmp)?;
            output::write_lag_trace(&lags, &cmp.lags)?;
            let mean_lag = (!cmp.lags.is_empty())
                .then(|| cmp.lags.iter().sum::<usize>() as f64 / cmp.lags.len() as f64);
            (
                vec![path, lags],
                json!({
                    "mean_lag": mean_lag,
                    "resampling_count": cmp.resampling_count,
                    "lag_cap_hits": cmp.cap_hits,
                }),
            )
        }
        Command::MseStudy(_) => {
            let setup = Setup::from_config(&cfg)?;
            let study = studies::empirical_mse_study(&cfg, &setup)?;
            let (table, optimal, lags) = (file("mse_table.csv"), file("mse_optimal.csv"), file("mse_lags.csv"));
            output::write_mse(&table, &optimal, &study)?;
            output::write_mse_lags(&lags, &study)?;
            (
                vec![table, optimal, lags],
                json!({ "within_iqr_fraction": study.within_iqr_fraction }),
            )
        }
        Command::LagStudy(_) => {
            let setup = Setup::from_config(&cfg)?;
            let study = studies::lag_scaling_study(&cfg, &setup)?;
            let (runs, summary) = (file("lag_runs.csv"), file("lag_summary.csv"));
            output::write_lag_study(&runs, &summary, &study)?;
            let fit = study.fit.map(|f| {
                json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared })
            });
            (vec![runs, summary], json!({ "fit": fit }))
        }
        Command::ConfintStudy(_) => {
            let setup = Setup::from_config(&cfg)?;
            let study = studies::confint_study(&cfg, &setup)?;
            let path = file("confint.csv");
            output::write_confint(&path, &study)?;
            (vec![path], json!({ "overall_failure_rate": study.overall }))
        }
    };

    let manifest = Manifest {
        command: command.name().to_string(),
        seed: cfg.seed,
        git_revision: output::git_revision(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        outputs,
        summary,
        config: cfg,
    };
    output::write_manifest(&file(&format!("{}.manifest.json", command.name())), &manifest)?;
    info!("done in {:.2}s", manifest.elapsed_seconds);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn error_line(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
