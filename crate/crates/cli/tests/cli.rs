//! The `lmc` binary end to end: exit codes, error reporting and outputs.

use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = r#"
[model]
u0 = 1.0
u1 = 0.5
max_dt = 0.01

[model.levy]
kind = "tempered_stable"
alpha = 0.5
lambda_plus = 1.0
lambda_minus = 1.0
scale_plus = 1.0
scale_minus = 1.0

[model.drift]
kind = "linear"
theta_min = 0.1
theta_max = 3.0
"#;

fn config(dir: &Path, name: &str, task: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("seed = 3\n{MODEL}\n[task]\n{task}")).unwrap();
    path
}

fn lmc(task: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmc"))
        .arg(task)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

const DENSITY: &str = "kind = \"density\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 500\ny = [0.0, 0.5]\n";

#[test]
fn density_run_writes_tagged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d.toml", DENSITY);
    let out = dir.path().join("out");
    let o = lmc("density", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("density.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with("seed,config_hash,version"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4, "density and dual form at two points");
    assert!(rows.iter().all(|r| r.contains(",3,")));
    let report = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    for line in report.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seed"], 3);
        assert!(v["config_hash"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn seed_override_changes_results_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d.toml", DENSITY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(lmc("density", &cfg, &a, &[]).status.success());
    assert!(lmc("density", &cfg, &b, &["--seed", "4"]).status.success());
    let (fa, fb) = (
        std::fs::read_to_string(a.join("density.csv")).unwrap(),
        std::fs::read_to_string(b.join("density.csv")).unwrap(),
    );
    assert_ne!(fa, fb);
    let hash = |s: &str| s.lines().nth(1).unwrap().rsplit(',').nth(1).unwrap().to_string();
    assert_ne!(hash(&fa), hash(&fb));
}

#[test]
fn config_errors_exit_2_with_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "bad.toml",
        "kind = \"fisher\"\ntheta = [1.0]\nx0 = 1.0\ntimes = [1.0, 0.5]\nn_outer = 4\nn_inner = 4\n",
    );
    let o = lmc("fisher", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = std::fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .position(|l| l.starts_with("times"))
        .unwrap()
        + 1;
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(err.contains("task.times"), "{err}");
    assert!(!dir.path().join("out").exists(), "nothing runs before validation");
}

#[test]
fn theta_outside_parameter_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d.toml", &DENSITY.replace("theta = 1.0", "theta = 5.0"));
    let o = lmc("density", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("task.theta"));
}

#[test]
fn subcommand_must_match_task_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "d.toml", DENSITY);
    let o = lmc("score", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mle_reads_observations_written_by_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = config(
        dir.path(),
        "sim.toml",
        "kind = \"simulate\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nobservation_times = { start = 0.5, stop = 3.0, points = 6 }\n",
    );
    let sim_out = dir.path().join("sim");
    assert!(lmc("simulate", &sim_cfg, &sim_out, &[]).status.success());
    assert!(sim_out.join("path_0000.csv").exists());
    std::fs::copy(sim_out.join("observations.csv"), dir.path().join("obs.csv")).unwrap();
    let mle_cfg = config(
        dir.path(),
        "mle.toml",
        "kind = \"mle\"\nobservations = \"obs.csv\"\nn_paths = 200\ncurve_points = 5\nfisher = false\n",
    );
    let out = dir.path().join("mle");
    let o = lmc("mle", &mle_cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(out.join("likelihood_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 6);
}
