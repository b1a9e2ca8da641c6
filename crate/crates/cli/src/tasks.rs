//! One function per task. Each writes its files through [`OutputDir`] and
//! returns whether the task's own checks passed (only `validate` has any).

use std::path::Path;

use levy_malliavin::estimators::{estimate_fisher_onestep, TerminalBatch};
use levy_malliavin::inference::{
    fisher_info_experiment, mle, simulate_observations, FisherOptions, LikelihoodOptions, MleOptions, ObservationSet,
};
use levy_malliavin::rng::StreamSeed;
use levy_malliavin::variation::PathRealization;
use serde_json::json;

use crate::config::{
    AssumptionPolicy, BuiltModel, CrlbTask, DensityTask, FisherTask, MleTask, RunConfig, ScoreTask, SimulateTask,
    TaskConfig, ValidateTask,
};
use crate::output::{fmt_f64, OutputDir, ResultRow};
use crate::validation::{mle_study, run_suite, study_checks, Fixture, SuiteSizes};
use crate::CliError;

/// Builds the model for `horizon`, applies the assumption policy and
/// writes the `run` record.
fn prepare(cfg: &RunConfig, horizon: f64, out: &mut OutputDir) -> Result<BuiltModel, CliError> {
    let built = cfg.build_model(horizon)?;
    out.record(
        "run",
        &json!({
            "task": cfg.task.name(),
            "eps_trunc": built.eps_trunc,
            "max_dt": built.max_dt,
            "perturbed_mass_rate": built.simulator.comp.perturbed_mass,
            "assumption": built.assumption,
        }),
    )?;
    if !built.assumption.all_passed() {
        let failed: Vec<&str> = built
            .assumption
            .clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.clause.as_str())
            .collect();
        let msg = format!("Levy measure fails regularity condition(s) {}", failed.join(", "));
        match cfg.model.assumption_h {
            AssumptionPolicy::Warn => {
                eprintln!("warning: {msg}");
                out.record("warning", &json!({ "message": msg }))?;
            }
            AssumptionPolicy::Error => return Err(CliError::Assumption(msg)),
        }
    }
    Ok(built)
}

fn warn_flags(out: &mut OutputDir, context: &str, flags: &[String]) -> std::io::Result<()> {
    for f in flags {
        eprintln!("warning: {context}: {f}");
        out.record("warning", &json!({ "context": context, "message": f }))?;
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, config_dir: &Path, out: &mut OutputDir) -> Result<bool, CliError> {
    let seed = StreamSeed::new(cfg.seed);
    match &cfg.task {
        TaskConfig::Simulate(t) => simulate(cfg, t, seed, out),
        TaskConfig::Density(t) => density(cfg, t, seed, out),
        TaskConfig::Score(t) => score(cfg, t, seed, out),
        TaskConfig::Fisher(t) => fisher(cfg, t, seed, out),
        TaskConfig::Mle(t) => run_mle(cfg, t, config_dir, seed, out),
        TaskConfig::Crlb(t) => crlb(cfg, t, seed, out),
        TaskConfig::Validate(t) => validate(cfg, t, seed, out),
    }
}

fn path_rows(path: &PathRealization) -> Vec<Vec<String>> {
    path.grid
        .iter()
        .zip(&path.states)
        .map(|(t, s)| {
            [
                *t,
                s.x,
                s.cal_e,
                s.dx,
                s.d2x,
                s.d3x,
                s.dtheta_x,
                s.d_dtheta_x,
                s.delta1,
                s.d_delta1,
            ]
            .iter()
            .map(|v| fmt_f64(*v))
            .collect()
        })
        .collect()
}

fn observation_rows(obs: &ObservationSet) -> Vec<Vec<String>> {
    std::iter::once((0.0, obs.x0))
        .chain(obs.times.iter().copied().zip(obs.values.iter().copied()))
        .map(|(t, x)| vec![fmt_f64(t), fmt_f64(x)])
        .collect()
}

fn simulate(cfg: &RunConfig, t: &SimulateTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let sim = &built.simulator;
    let header = [
        "t", "x", "calE", "dX", "d2X", "d3X", "dThetaX", "dDThetaX", "delta1", "dDelta1",
    ];
    for i in 0..t.n_paths {
        let path = sim.simulate_path(t.theta, t.x0, t.t, &mut seed.child(1).path_rng(i as u64))?;
        out.write_table(&format!("path_{i:04}.csv"), &header, &path_rows(&path))?;
        let jumps: Vec<Vec<String>> = path.jumps.iter().map(|j| vec![fmt_f64(j.tau), fmt_f64(j.u)]).collect();
        out.write_table(&format!("path_{i:04}_jumps.csv"), &["tau", "u"], &jumps)?;
        let end = path.terminal();
        out.record(
            "path",
            &json!({ "index": i, "n_jumps": path.jumps.len(), "x": end.x, "dX": end.dx, "delta1": end.delta1 }),
        )?;
    }
    if let Some(g) = &t.observation_times {
        let obs = simulate_observations(sim, t.theta, t.x0, &g.values(), seed.child(0))?;
        out.write_table("observations.csv", &["t", "x"], &observation_rows(&obs))?;
        out.record("observations", &json!({ "n": obs.len(), "theta": t.theta }))?;
    }
    Ok(true)
}

fn density(cfg: &RunConfig, t: &DensityTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let batch = TerminalBatch::simulate(&built.simulator, t.theta, t.x0, t.t, t.n_paths, seed.child(0))?;
    let mut rows = Vec::new();
    let mut flagged = 0;
    for y in t.y.values() {
        let p = batch.density(y);
        flagged += usize::from(p.is_flagged());
        rows.push(ResultRow::from_estimate("density", t.theta, t.x0, Some(y), t.t, &p));
        if t.dual_form {
            let p2 = batch.density_v2(y);
            rows.push(ResultRow::from_estimate(
                "density_dual",
                t.theta,
                t.x0,
                Some(y),
                t.t,
                &p2,
            ));
        }
    }
    out.write_results("density.csv", &rows)?;
    let norm = batch.mean_of(|s, w| w.xi * (s.x - t.x0));
    out.record(
        "density",
        &json!({
            "n_paths": t.n_paths,
            "n_dropped": batch.n_dropped,
            "integral": norm.value,
            "integral_stderr": norm.stderr,
            "n_flagged": flagged,
        }),
    )?;
    if batch.drop_rate() > batch.max_drop_rate {
        warn_flags(out, "density", &[format!("drop rate {:.3e}", batch.drop_rate())])?;
    }
    println!(
        "density: {} points, integral {:.4} +- {:.4}",
        t.y.values().len(),
        norm.value,
        norm.stderr
    );
    Ok(true)
}

fn score(cfg: &RunConfig, t: &ScoreTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let batch = TerminalBatch::simulate(&built.simulator, t.theta, t.x0, t.t, t.n_paths, seed.child(0))?;
    let h = t.bandwidth.unwrap_or_else(|| batch.silverman_bandwidth());
    let mut rows = Vec::new();
    let mut flagged = 0;
    for y in t.y.values() {
        for (b, g) in batch.score_bandwidths(y, h) {
            flagged += usize::from(g.is_flagged());
            rows.push(ResultRow::from_estimate("score", t.theta, t.x0, Some(y), t.t, &g).with_bandwidth(b));
        }
    }
    out.write_results("score.csv", &rows)?;
    out.record(
        "score",
        &json!({ "bandwidth": h, "bandwidths": [0.5 * h, h, 2.0 * h], "n_flagged": flagged, "n_dropped": batch.n_dropped }),
    )?;
    if flagged > 0 {
        warn_flags(
            out,
            "score",
            &[format!(
                "{flagged} kernel estimates have effective sample size below 30"
            )],
        )?;
    }
    println!("score: bandwidth {h:.4}, {flagged} flagged estimates");
    Ok(true)
}

fn fisher(cfg: &RunConfig, t: &FisherTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let sim = &built.simulator;
    let times = t.times.values();
    let horizon = *times.last().expect("validated non-empty");
    let mut rows = Vec::new();
    for theta in t.theta.values() {
        if times.len() == 1 {
            let f = estimate_fisher_onestep(
                sim,
                theta,
                t.x0,
                horizon,
                t.n_outer,
                t.n_inner,
                t.bandwidth,
                t.debias,
                seed.child(0),
            )?;
            rows.push(
                ResultRow::from_estimate("fisher", theta, t.x0, None, horizon, &f.estimate).with_bandwidth(f.bandwidth),
            );
            warn_flags(out, &format!("fisher at theta = {theta}"), &f.estimate.flags)?;
        } else {
            let opts = FisherOptions {
                n_outer: t.n_outer,
                n_inner: t.n_inner,
                bandwidth: t.bandwidth,
                debias: t.debias,
            };
            let f = fisher_info_experiment(sim, theta, t.x0, &times, &opts, seed.child(0))?;
            rows.push(ResultRow::from_estimate("fisher", theta, t.x0, None, horizon, &f.total));
            for (tk, e) in times.iter().zip(&f.per_step) {
                rows.push(ResultRow::from_estimate("fisher_step", theta, t.x0, None, *tk, e));
            }
            warn_flags(out, &format!("fisher at theta = {theta}"), &f.total.flags)?;
        }
    }
    out.write_results("fisher.csv", &rows)?;
    for r in rows.iter().filter(|r| r.quantity == "fisher") {
        println!("fisher: theta {:.4} -> {:.4} +- {:.4}", r.theta, r.value, r.stderr);
    }
    Ok(true)
}

fn run_mle(
    cfg: &RunConfig,
    t: &MleTask,
    config_dir: &Path,
    seed: StreamSeed,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let file_obs = match &t.observations {
        Some(p) => {
            let path = config_dir.join(p);
            let f = std::fs::File::open(&path)
                .map_err(|e| CliError::Input(format!("cannot open observations {}: {e}", path.display())))?;
            Some(ObservationSet::read_csv(std::io::BufReader::new(f))?)
        }
        None => None,
    };
    let horizon = match &file_obs {
        Some(o) => o.transitions().iter().map(|tr| tr.0).fold(f64::INFINITY, f64::min),
        None => cfg.shortest_horizon(),
    };
    let built = prepare(cfg, horizon, out)?;
    let sim = &built.simulator;
    let obs = match file_obs {
        Some(o) => o,
        None => {
            let times = t.times.as_ref().expect("validated").values();
            simulate_observations(
                sim,
                t.theta_true.expect("validated"),
                t.x0.expect("validated"),
                &times,
                seed.child(0),
            )?
        }
    };
    out.write_table("observations.csv", &["t", "x"], &observation_rows(&obs))?;
    let opts = MleOptions {
        bracket: (t.bracket[0], t.bracket[1]),
        curve_points: t.curve_points,
        tol: t.tol,
        likelihood: LikelihoodOptions {
            n_paths: t.n_paths,
            log_floor: t.log_floor,
            score_bandwidth: None,
        },
    };
    let mut report = mle(sim, &obs, &opts, seed.child(1))?;
    if t.fisher {
        let fopts = FisherOptions {
            n_outer: t.n_outer,
            n_inner: t.n_inner,
            bandwidth: None,
            debias: true,
        };
        let f = fisher_info_experiment(sim, report.theta_hat, obs.x0, &obs.times, &fopts, seed.child(2))?;
        report.fisher = Some(f.total.value);
        report.cr_bound = (f.total.value > 0.0).then(|| 1.0 / f.total.value);
        if f.total.value <= 0.0 {
            report
                .flags
                .push("Fisher information estimate is not positive; no bound reported".into());
        }
    }
    let horizon_end = *obs.times.last().expect("non-empty");
    let rows: Vec<ResultRow> = report
        .curve
        .iter()
        .map(|p| ResultRow {
            quantity: "log_likelihood".into(),
            theta: p.theta,
            x: obs.x0,
            y: None,
            t: horizon_end,
            value: p.value,
            stderr: p.stderr,
            n: t.n_paths,
            n_dropped: 0,
            h: None,
        })
        .collect();
    out.write_results("likelihood_curve.csv", &rows)?;
    warn_flags(out, "mle", &report.flags)?;
    out.record("mle", &report)?;
    println!(
        "mle: theta_hat {:.4} (log-likelihood {:.3}, {} evaluations){}",
        report.theta_hat,
        report.log_likelihood,
        report.evaluations,
        report.fisher.map_or(String::new(), |i| format!(", Fisher {i:.4}"))
    );
    Ok(true)
}

fn crlb(cfg: &RunConfig, t: &CrlbTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let times = t.times.values();
    let mle_opts = MleOptions {
        bracket: (t.bracket[0], t.bracket[1]),
        curve_points: t.curve_points,
        tol: t.tol,
        likelihood: LikelihoodOptions {
            n_paths: t.n_paths,
            log_floor: t.log_floor,
            score_bandwidth: None,
        },
    };
    let fisher_opts = FisherOptions {
        n_outer: t.n_outer,
        n_inner: t.n_inner,
        bandwidth: None,
        debias: t.debias,
    };
    let s = mle_study(
        &built.simulator,
        t.theta_true,
        t.x0,
        &times,
        t.replicas,
        &mle_opts,
        &fisher_opts,
        t.bias_slope_step,
        seed,
    )?;
    let rows: Vec<Vec<String>> = s
        .replicas
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                fmt_f64(r.theta_hat),
                fmt_f64(r.log_likelihood),
                r.interior.to_string(),
                r.identifiable.to_string(),
            ]
        })
        .collect();
    out.write_table(
        "replicas.csv",
        &["replica", "theta_hat", "log_likelihood", "interior", "identifiable"],
        &rows,
    )?;
    let horizon = *times.last().expect("validated");
    let mut frows = vec![ResultRow::from_estimate(
        "fisher",
        t.theta_true,
        t.x0,
        None,
        horizon,
        &s.fisher.total,
    )];
    for (tk, e) in times.iter().zip(&s.fisher.per_step) {
        frows.push(ResultRow::from_estimate(
            "fisher_step",
            t.theta_true,
            t.x0,
            None,
            *tk,
            e,
        ));
    }
    out.write_results("fisher.csv", &frows)?;
    let checks = study_checks(&s);
    out.record(
        "cramer_rao",
        &json!({
            "report": s.cramer_rao,
            "coverage": s.coverage,
            "bias_slope": s.bias_slope,
            "checks": checks,
        }),
    )?;
    let cr = &s.cramer_rao;
    println!(
        "crlb: MSE {:.4e}, bound {:.4e}, ratio {:.3} +- {:.3}, coverage {:.2}",
        cr.mse, cr.bound, cr.ratio, cr.ratio_stderr, s.coverage
    );
    Ok(true)
}

fn validate(cfg: &RunConfig, t: &ValidateTask, seed: StreamSeed, out: &mut OutputDir) -> Result<bool, CliError> {
    let built = prepare(cfg, cfg.shortest_horizon(), out)?;
    let fx = Fixture {
        theta: t.theta,
        x0: t.x0,
        t: t.t,
    };
    let sizes = SuiteSizes {
        n_paths: t.n_paths,
        n_fixed_paths: t.n_fixed_paths,
    };
    let checks = run_suite(&built.simulator, &built.assumption, fx, sizes, seed)?;
    for c in &checks {
        out.record("check", c)?;
        println!("{}", c.line());
    }
    out.write_json("validate.json", &checks)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("validate: {} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}
