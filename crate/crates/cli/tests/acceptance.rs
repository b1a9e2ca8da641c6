//! Acceptance criteria AC1-AC10 on the Ornstein-Uhlenbeck fixture: linear
//! drift, θ = 1 in (0.1, 3), symmetric tempered-stable noise with α = 0.5,
//! λ = 1, u0 = 1, u1 = 0.5, t = 1, x0 = 1.
//!
//! Each criterion prints one PASS/FAIL line followed by the checks behind
//! it. Runtime limits are part of the criteria. The process exits non-zero
//! when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use levy_malliavin::drift::{DriftModel, LinearDrift};
use levy_malliavin::estimators::TerminalBatch;
use levy_malliavin::inference::{FisherOptions, MleOptions};
use levy_malliavin::levy_model::{LevyModel, PerturbationSpec, TemperedStable, DEFAULT_MIN_PERTURBED_MASS};
use levy_malliavin::rng::StreamSeed;
use levy_malliavin::variation::{default_step, Simulator};
use levy_malliavin_cli::validation::{
    closed_form_check, drop_rate_check, dual_density_check, fisher_oracle_check, girsanov_checks, kde_checks,
    mle_study, score_duality_checks, score_fd_check, stencil_checks, study_checks, zero_mean_checks, Check, Fixture,
};

const SEED: u64 = 1;
const FX: Fixture = Fixture {
    theta: 1.0,
    x0: 1.0,
    t: 1.0,
};

fn fixture_sim(horizon: f64, max_dt: f64) -> Simulator {
    let ts = TemperedStable::symmetric(0.5, 1.0, 1.0).unwrap();
    let model = LevyModel::new(Arc::new(ts), 1.0, 0.0).unwrap();
    let spec = PerturbationSpec::new(1.0, 0.5).unwrap();
    let eps = model
        .default_truncation(&spec, horizon, DEFAULT_MIN_PERTURBED_MASS)
        .unwrap();
    let drift: Arc<dyn DriftModel> = Arc::new(LinearDrift {
        theta_min: 0.1,
        theta_max: 3.0,
    });
    Simulator::new(model, spec, drift, eps, max_dt).unwrap()
}

fn grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + step * i as f64).collect()
}

struct Outcome {
    id: &'static str,
    title: &'static str,
    checks: Vec<Check>,
    elapsed: Duration,
    limit: Duration,
    error: Option<String>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.error.is_none() && self.elapsed <= self.limit && self.checks.iter().all(|c| c.passed)
    }

    fn print(&self) {
        println!(
            "{} {:<5} {:<44} {:>8.1}s (limit {}s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        );
        for c in &self.checks {
            println!("      {}", c.line());
        }
        if let Some(e) = &self.error {
            println!("      error: {e}");
        }
    }
}

fn run(
    id: &'static str,
    title: &'static str,
    limit_secs: u64,
    f: impl FnOnce() -> Result<Vec<Check>, String>,
) -> Outcome {
    let start = Instant::now();
    let (checks, error) = match f() {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    let out = Outcome {
        id,
        title,
        checks,
        elapsed: start.elapsed(),
        limit: Duration::from_secs(limit_secs),
        error,
    };
    out.print();
    out
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const CLI_CONFIG: &str = r#"
seed = 17

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

[task]
"#;

fn cli_tasks() -> Vec<(&'static str, String)> {
    vec![
        (
            "density",
            "kind = \"density\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 4000\ny = { start = -0.5, stop = 1.5, points = 11 }\n".into(),
        ),
        (
            "score",
            "kind = \"score\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 4000\ny = [0.0, 0.5, 1.0]\n".into(),
        ),
        (
            "fisher",
            "kind = \"fisher\"\ntheta = [1.0]\nx0 = 1.0\ntimes = [0.5, 1.0]\nn_outer = 8\nn_inner = 300\n".into(),
        ),
        (
            "mle",
            "kind = \"mle\"\ntheta_true = 1.0\nx0 = 1.0\ntimes = { start = 0.5, stop = 4.0, points = 8 }\nn_paths = 300\ncurve_points = 5\nn_outer = 5\nn_inner = 200\n".into(),
        ),
        (
            "simulate",
            "kind = \"simulate\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 2\nobservation_times = [0.5, 1.0]\n".into(),
        ),
    ]
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Runs every task with one and two threads plus a rerun, comparing bytes.
fn determinism_checks() -> Result<Vec<Check>, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let bin = env!("CARGO_BIN_EXE_lmc");
    let mut checks = Vec::new();
    for (task, body) in cli_tasks() {
        let cfg = tmp.path().join(format!("{task}.toml"));
        std::fs::write(&cfg, format!("{CLI_CONFIG}{body}")).map_err(err)?;
        let mut outputs = Vec::new();
        for (k, threads) in ["1", "2", "1"].into_iter().enumerate() {
            let out = tmp.path().join(format!("{task}_{k}"));
            let status = Command::new(bin)
                .args([task, "--config"])
                .arg(&cfg)
                .args(["--threads", threads, "--out"])
                .arg(&out)
                .output()
                .map_err(err)?;
            if !status.status.success() {
                return Err(format!("{task}: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(read_dir_sorted(&out));
        }
        let differing = outputs[1..].iter().filter(|o| **o != outputs[0]).count();
        checks.push(Check::at_most(
            &format!("{task}: runs differing from first"),
            differing as f64,
            0.0,
            format!("{} files, threads 1/2/1", outputs[0].len()),
        ));
    }
    Ok(checks)
}

fn main() {
    let seed = StreamSeed::new(SEED);
    let sim = fixture_sim(FX.t, default_step(FX.t));
    let mut outcomes = Vec::new();

    outcomes.push(run("AC1", "pathwise finite-difference oracle", 60, || {
        stencil_checks(&sim, FX, 100, seed.child(1)).map_err(err)
    }));
    outcomes.push(run("AC2", "closed-form DX", 60, || {
        Ok(vec![closed_form_check(&sim, FX, 1000, seed.child(2)).map_err(err)?])
    }));

    // AC3 and AC4 share one batch of 1e5 weighted paths; the shared
    // simulation is timed under AC3.
    let mut batch = None;
    outcomes.push(run("AC3", "zero-mean weights", 300, || {
        let b = TerminalBatch::simulate(&sim, FX.theta, FX.x0, FX.t, 100_000, seed.child(3)).map_err(err)?;
        let checks = zero_mean_checks(&b);
        batch = Some(b);
        Ok(checks)
    }));
    let batch = batch.expect("AC3 batch");
    let ys11 = grid(-0.5, 0.2, 11);
    outcomes.push(run("AC4", "density dual representations", 600, || {
        Ok(vec![dual_density_check(&batch, &ys11)])
    }));
    outcomes.push(run("AC5", "density vs kernel oracle", 900, || {
        kde_checks(&sim, &batch, &ys11, 1_000_000, seed.child(5)).map_err(err)
    }));
    outcomes.push(run("AC6", "score consistency", 900, || {
        let ys7 = grid(-0.5, 0.4, 7);
        let mut c = vec![score_fd_check(&sim, &batch, &ys7, 1e-2, 100_000, seed.child(6)).map_err(err)?];
        c.extend(score_duality_checks(&sim, FX, 100_000, seed.child(16)).map_err(err)?);
        Ok(c)
    }));
    outcomes.push(run("AC7", "Girsanov suite", 300, || {
        girsanov_checks(&sim, FX.t, 100_000, seed.child(7)).map_err(err)
    }));
    outcomes.push(run("AC8", "Fisher information and Cramer-Rao study", 3600, || {
        let ys = grid(-4.0, 0.1, 101);
        let mut c = vec![fisher_oracle_check(&sim, FX, 4000, 100_000, &ys, 0.05, 100_000, seed.child(8)).map_err(err)?];
        // 50 observations at spacing 0.5; truncation tuned to the
        // transition length and a coarser step keep 20 replicas affordable.
        let study_sim = fixture_sim(0.5, 1e-2);
        let times = grid(0.5, 0.5, 50);
        let fisher = FisherOptions {
            n_outer: 40,
            n_inner: 2000,
            bandwidth: None,
            debias: true,
        };
        let study = mle_study(
            &study_sim,
            FX.theta,
            FX.x0,
            &times,
            20,
            &MleOptions::default(),
            &fisher,
            None,
            seed.child(18),
        )
        .map_err(err)?;
        c.extend(study_checks(&study));
        Ok(c)
    }));
    outcomes.push(run("AC9", "degenerate-path bound", 1, || {
        Ok(vec![drop_rate_check(&sim, &batch)])
    }));
    outcomes.push(run(
        "AC10",
        "byte-identical reruns across thread counts",
        600,
        determinism_checks,
    ));

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.id).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
