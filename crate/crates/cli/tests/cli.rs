use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"
particles = 50
steps = 20
replicates = 3
seed = 1
estimators = ["alvar", "fixed_lag(2)"]
checkpoint_stride = 5

[model]
kind = "sv"
a = 0.975
b = 0.641
sigma = 0.165
"#;

fn alvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alvar")).args(args).output().unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON: {line:?} ({e})"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_observation_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{CONFIG}\n[data]\nobservations = \"missing/obs.csv\"\n");
    let cfg = write_config(dir.path(), &text);
    let out = alvar(&["filter", "--config", &cfg]);
    assert!(!out.status.success());
    let err = error_line(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("missing/obs.csv"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = alvar(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("\"alvar\"", "\"alvr\""));
    let out = alvar(&["compare", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "config");

    let missing = dir.path().join("nope.toml");
    let out = alvar(&["compare", "--config", missing.to_str().unwrap()]);
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn confint_study_rejects_non_gaussian_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = alvar(&["confint-study", "--config", &cfg]);
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "config");
}

#[test]
fn overrides_reach_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let out = alvar(&[
        "compare",
        "--config",
        &cfg,
        "--particles",
        "30",
        "--steps",
        "12",
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,estimate,var_alvar,lag,var_cle,var_fixed_2,ess,resampled,brute_force,distinct_alvar,distinct_eve"
    );
    let times: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times, ["0", "5", "10", "12"]);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("compare.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["particles"], 30);
    assert_eq!(manifest["config"]["steps"], 12);
    assert_eq!(manifest["command"], "compare");
    assert!(manifest["git_revision"].is_string());
}

#[test]
fn simulated_observations_feed_back_into_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let sim_dir = dir.path().join("sim");
    assert!(alvar(&["simulate", "--config", &cfg, "--out", sim_dir.to_str().unwrap()]).status.success());
    let from_file = format!("{CONFIG}\n[data]\nobservations = \"sim/observations.csv\"\n");
    let file_cfg = dir.path().join("file.toml");
    fs::write(&file_cfg, from_file).unwrap();

    let run = |cfg: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let o = alvar(&["filter", "--config", cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out_dir.join("filter.csv")).unwrap()
    };
    // the simulated record is the one used when no file is configured
    assert_eq!(run(&cfg, "a"), run(file_cfg.to_str().unwrap(), "b"));
}
