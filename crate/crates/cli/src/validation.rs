//! Oracle checks as pass/fail rows.
//!
//! Each function runs one family of oracles and returns [`Check`] rows with
//! the statistic it judged and the limit it was judged against. The
//! `validate` task runs the cheap ones at moderate sizes; the acceptance
//! suite calls the same functions at full size.

use std::f64::consts::PI;

use levy_malliavin::drift::check_drift;
use levy_malliavin::estimators::{estimate_fisher_onestep, par_paths, score_duality_check, TerminalBatch};
use levy_malliavin::inference::{
    bias_slope, coverage, cramer_rao_report, fisher_info_experiment, mle_replicas, CramerRaoReport, ExperimentFisher,
    FisherOptions, MleOptions, Replica,
};
use levy_malliavin::levy_model::{AssumptionReport, JumpRecord};
use levy_malliavin::oracles::{
    duality_check, fd_variation_check, girsanov_linearization, girsanov_mc_check, log_density_theta_fd, theta_fd_check,
};
use levy_malliavin::rng::StreamSeed;
use levy_malliavin::stats::{z_score, MCEstimate, MeanAccumulator};
use levy_malliavin::variation::{closed_form_terminal, Simulator};
use levy_malliavin::Result;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AtMost,
    AtLeast,
}

/// One pass/fail row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub rule: Rule,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: &str, statistic: f64, limit: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            rule: Rule::AtMost,
            limit,
            passed: statistic <= limit,
            detail,
        }
    }

    pub fn at_least(name: &str, statistic: f64, limit: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            rule: Rule::AtLeast,
            limit,
            passed: statistic >= limit,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let op = match self.rule {
            Rule::AtMost => "<=",
            Rule::AtLeast => ">=",
        };
        format!(
            "{} {:<34} {:>12.4e} {op} {:<10.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.limit,
            self.detail
        )
    }
}

/// Start point, parameter and horizon of the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fixture {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
}

pub const STENCIL_C: f64 = 1e-3;
pub const STENCIL_D_THETA: f64 = 1e-4;
pub const Z_LIMIT: f64 = 3.0;

pub fn assumption_checks(report: &AssumptionReport) -> Vec<Check> {
    report
        .clauses
        .iter()
        .map(|c| {
            Check::at_least(
                &format!("levy measure condition {}", c.clause),
                if c.passed { 1.0 } else { 0.0 },
                1.0,
                c.evidence.clone(),
            )
        })
        .collect()
}

pub fn drift_check(sim: &Simulator, radius: f64) -> Check {
    let r = check_drift(sim.drift.as_ref(), radius);
    Check::at_most(
        "drift derivatives vs differences",
        r.max_fd_mismatch,
        1e-4,
        format!("linear growth C = {:.3}", r.linear_growth_c),
    )
}

fn fixed_jumps(sim: &Simulator, t: f64, n: usize, seed: StreamSeed) -> Vec<Vec<JumpRecord>> {
    par_paths(n, |i| sim.sample_jumps(t, &mut seed.path_rng(i)))
}

/// Pathwise stencils on `n_paths` fixed jump lists: worst relative error of
/// each variation against its finite-difference oracle.
pub fn stencil_checks(sim: &Simulator, fx: Fixture, n_paths: usize, seed: StreamSeed) -> Result<Vec<Check>> {
    let configs = fixed_jumps(sim, fx.t, n_paths, seed);
    let rows: Vec<[f64; 5]> = configs
        .iter()
        .map(|jumps| -> Result<[f64; 5]> {
            let v = fd_variation_check(sim, fx.theta, fx.x0, fx.t, jumps, STENCIL_C)?;
            let th = theta_fd_check(sim, fx.theta, fx.x0, fx.t, jumps, STENCIL_D_THETA, STENCIL_C)?;
            Ok([
                v.dx.rel_error,
                v.d2x.rel_error,
                v.d3x.rel_error,
                th.dtheta_x.rel_error,
                th.d_dtheta_x.rel_error,
            ])
        })
        .collect::<Result<_>>()?;
    let worst = |k: usize| rows.iter().map(|r| r[k]).fold(0.0, f64::max);
    let detail = format!("{n_paths} paths, c = {STENCIL_C:e}, dtheta = {STENCIL_D_THETA:e}");
    Ok(vec![
        Check::at_most("stencil DX", worst(0), 1e-4, detail.clone()),
        Check::at_most("stencil D2X", worst(1), 1e-3, detail.clone()),
        Check::at_most("stencil D3X", worst(2), 1e-3, detail.clone()),
        Check::at_most("stencil dtheta X", worst(3), 1e-6, detail.clone()),
        Check::at_most("stencil D(dtheta X)", worst(4), 1e-3, detail),
    ])
}

/// ODE-route `DX` against its integral representation along the path.
pub fn closed_form_check(sim: &Simulator, fx: Fixture, n_paths: usize, seed: StreamSeed) -> Result<Check> {
    let errs: Vec<f64> = par_paths(n_paths, |i| -> Result<f64> {
        let path = sim.simulate_path(fx.theta, fx.x0, fx.t, &mut seed.path_rng(i))?;
        let cf = closed_form_terminal(sim, &path);
        let ode = path.terminal().dx;
        Ok(if cf.dx == 0.0 {
            ode.abs()
        } else {
            (ode - cf.dx).abs() / cf.dx.abs()
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(Check::at_most(
        "closed-form DX",
        worst,
        1e-8,
        format!("{n_paths} paths"),
    ))
}

fn z_detail(e: &MCEstimate) -> String {
    format!("mean {:.4e} +- {:.2e}, n = {}", e.value, e.stderr, e.n_paths)
}

/// `E[Ξ]`, `E[Ξ¹]` and `E[δ(Ξ/DX)]` against 0.
pub fn zero_mean_checks(batch: &TerminalBatch) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, e) in [
        ("zero mean of xi", batch.mean_of(|_, w| w.xi)),
        ("zero mean of xi1", batch.mean_of(|_, w| w.xi1)),
        ("zero mean of delta(xi/DX)", batch.mean_of(|_, w| w.xi2)),
    ] {
        let z = z_score(e.value, e.stderr, 0.0);
        out.push(Check::at_most(name, z.abs(), Z_LIMIT, z_detail(&e)));
    }
    out
}

fn worst_z(zs: &[(f64, f64)]) -> (f64, String) {
    let (y, z) = zs
        .iter()
        .copied()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap_or((f64::NAN, 0.0));
    let all: Vec<String> = zs.iter().map(|(_, z)| format!("{z:.2}")).collect();
    (z.abs(), format!("worst at y = {y:.3}; z = [{}]", all.join(", ")))
}

/// Indicator and `δ(Ξ/DX)` forms of the density at each `y`.
pub fn dual_density_check(batch: &TerminalBatch, ys: &[f64]) -> Check {
    let zs: Vec<(f64, f64)> = ys
        .iter()
        .map(|&y| (y, batch.density(y).z_against(&batch.density_v2(y))))
        .collect();
    let (z, detail) = worst_z(&zs);
    Check::at_most("density dual representations", z, Z_LIMIT, detail)
}

/// Fourth-order Gaussian kernel `(3 − z²)/2 · φ(z)`: its bias is `O(h⁴)`,
/// small enough to compare with the weighted estimator at 3 standard errors.
fn kernel4(z: f64) -> f64 {
    0.5 * (3.0 - z * z) * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Kernel density estimate of plain terminal values with its standard error.
pub fn kde(values: &[f64], y: f64, h: f64) -> MCEstimate {
    let acc: MeanAccumulator = values.iter().map(|x| kernel4((x - y) / h) / h).collect();
    MCEstimate::from_accumulator(&acc, 0, 0)
}

/// The weighted density against a KDE of `n_plain` plain paths, plus
/// `∫p̂ dy = E[Ξ(X − x)] = 1`.
pub fn kde_checks(
    sim: &Simulator,
    batch: &TerminalBatch,
    ys: &[f64],
    n_plain: usize,
    seed: StreamSeed,
) -> Result<Vec<Check>> {
    let values: Vec<f64> = par_paths(n_plain, |i| {
        sim.simulate_x(batch.theta, batch.x0, batch.t, &mut seed.path_rng(i))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let acc: MeanAccumulator = values.iter().copied().collect();
    let h = 1.06 * acc.variance().sqrt() * (n_plain as f64).powf(-0.2);
    let zs: Vec<(f64, f64)> = ys
        .iter()
        .map(|&y| (y, batch.density(y).z_against(&kde(&values, y, h))))
        .collect();
    let (z, detail) = worst_z(&zs);
    let norm = batch.mean_of(|s, w| w.xi * (s.x - batch.x0));
    let zn = z_score(norm.value - 1.0, norm.stderr, 0.0);
    Ok(vec![
        Check::at_most(
            "density vs kernel estimate",
            z,
            Z_LIMIT,
            format!("{n_plain} plain paths, h = {h:.4}; {detail}"),
        ),
        Check::at_most("density integrates to one", zn.abs(), Z_LIMIT, z_detail(&norm)),
    ])
}

/// Kernel-localized score against a common-random-number difference of
/// `log p̂` in θ, on an independent stream.
pub fn score_fd_check(
    sim: &Simulator,
    batch: &TerminalBatch,
    ys: &[f64],
    d_theta: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<Check> {
    let fd = log_density_theta_fd(sim, batch.theta, batch.x0, ys, batch.t, d_theta, n_paths, seed)?;
    let h = batch.silverman_bandwidth();
    let zs: Vec<(f64, f64)> = ys
        .iter()
        .zip(&fd)
        .map(|(&y, f)| (y, batch.score(y, h).z_against(f)))
        .collect();
    let (z, detail) = worst_z(&zs);
    Ok(Check::at_most(
        "score vs difference of log density",
        z,
        Z_LIMIT,
        format!("h = {h:.4}, dtheta = {d_theta:e}; {detail}"),
    ))
}

type TestFunction = (&'static str, fn(f64) -> f64, fn(f64) -> f64);

pub const TEST_FUNCTIONS: [TestFunction; 3] = [
    ("sin", f64::sin, f64::cos),
    ("tanh", f64::tanh, |x| 1.0 / x.cosh().powi(2)),
    ("gauss", |x| (-0.5 * x * x).exp(), |x| -x * (-0.5 * x * x).exp()),
];

/// `E[f′(X)∂_θX] = E[f(X)Ξ¹]` for the three test functions.
pub fn score_duality_checks(sim: &Simulator, fx: Fixture, n_paths: usize, seed: StreamSeed) -> Result<Vec<Check>> {
    TEST_FUNCTIONS
        .iter()
        .enumerate()
        .map(|(k, (name, f, df))| {
            let r = score_duality_check(sim, fx.theta, fx.x0, fx.t, f, df, n_paths, 1e-2, seed.child(k as u64))?;
            Ok(Check::at_most(
                &format!("theta duality, f = {name}"),
                r.z_pathwise_weighted.abs(),
                Z_LIMIT,
                format!(
                    "pathwise {:.4e}, weighted {:.4e}, difference {:.4e}; z vs difference {:.2}/{:.2}",
                    r.pathwise.value, r.weighted.value, r.finite_difference.value, r.z_pathwise_fd, r.z_weighted_fd
                ),
            ))
        })
        .collect()
}

/// `E[f′(X)DX] = E[f(X)δ(1)]` with `f = sin`.
pub fn malliavin_duality_check(sim: &Simulator, fx: Fixture, n_paths: usize, seed: StreamSeed) -> Result<Check> {
    let r = duality_check(sim, fx.theta, fx.x0, fx.t, f64::sin, f64::cos, n_paths, seed)?;
    Ok(Check::at_most(
        "Malliavin duality, f = sin",
        r.z.abs(),
        Z_LIMIT,
        format!(
            "E f'(X)DX = {:.4e}, E f(X)delta(1) = {:.4e}",
            r.derivative_side.value, r.divergence_side.value
        ),
    ))
}

/// Jumps of moderate size, away from the truncation level.
pub fn moderate_jump_count(jumps: &[JumpRecord]) -> f64 {
    jumps.iter().filter(|j| (0.1..0.4).contains(&j.u.abs())).count() as f64
}

/// `E[κ_c] = 1`, change of variables for a jump-count functional, and
/// `corr((κ_c − 1)/c, δ(1)) → 1`.
pub fn girsanov_checks(sim: &Simulator, t: f64, n_paths: usize, seed: StreamSeed) -> Result<Vec<Check>> {
    let eps = sim.truncation.eps;
    let r = girsanov_mc_check(
        &sim.model,
        &sim.spec,
        eps,
        t,
        moderate_jump_count,
        1e-2,
        n_paths,
        seed.child(0),
    )?;
    let lin = girsanov_linearization(
        &sim.model,
        &sim.spec,
        eps,
        t,
        &[1e-2, 1e-3, 1e-4],
        n_paths,
        seed.child(1),
    )?;
    let corr = lin.last().map_or(f64::NAN, |p| p.1);
    let all: Vec<String> = lin.iter().map(|(c, r)| format!("{c:e}: {r:.6}")).collect();
    Ok(vec![
        Check::at_most(
            "Girsanov density has mean one",
            r.z_mean_kappa.abs(),
            Z_LIMIT,
            z_detail(&r.mean_kappa),
        ),
        Check::at_most(
            "Girsanov change of variables",
            r.z_change_of_variables.abs(),
            Z_LIMIT,
            format!(
                "perturbed {:.4e}, reweighted {:.4e}",
                r.perturbed.value, r.reweighted.value
            ),
        ),
        Check::at_least(
            "Girsanov linearization correlation",
            corr,
            0.999,
            format!("c -> correlation: {}", all.join(", ")),
        ),
    ])
}

/// Observed fraction of degenerate paths against `2 exp(−T μ(ε < |u| < u₀))`.
pub fn drop_rate_check(sim: &Simulator, batch: &TerminalBatch) -> Check {
    let bound = 2.0 * (-batch.t * sim.comp.perturbed_mass).exp();
    Check::at_most(
        "degenerate path rate",
        batch.drop_rate(),
        bound,
        format!("{} of {} dropped", batch.n_dropped, batch.n_dropped + batch.n_valid()),
    )
}

/// Fisher information as `∫ (∂_θ log p)² p dy` from a common-random-number
/// difference of `log p̂` on an equally spaced grid, each squared difference
/// debiased by its variance.
pub fn fisher_by_quadrature(
    sim: &Simulator,
    fx: Fixture,
    ys: &[f64],
    d_theta: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<f64> {
    let dy = ys[1] - ys[0];
    let density = TerminalBatch::simulate_density_only(sim, fx.theta, fx.x0, fx.t, n_paths, seed.child(0))?;
    let fd = log_density_theta_fd(sim, fx.theta, fx.x0, ys, fx.t, d_theta, n_paths, seed.child(1))?;
    let mut total = 0.0;
    for (&y, g) in ys.iter().zip(&fd) {
        let p = density.density(y).value;
        if p > 0.0 && g.value.is_finite() {
            total += dy * (g.value * g.value - g.stderr * g.stderr) * p;
        }
    }
    Ok(total)
}

/// One-step Fisher information from the weights against the quadrature
/// oracle, within 15 %.
#[allow(clippy::too_many_arguments)]
pub fn fisher_oracle_check(
    sim: &Simulator,
    fx: Fixture,
    n_outer: usize,
    n_inner: usize,
    ys: &[f64],
    d_theta: f64,
    n_oracle: usize,
    seed: StreamSeed,
) -> Result<Check> {
    let est = estimate_fisher_onestep(sim, fx.theta, fx.x0, fx.t, n_outer, n_inner, None, true, seed.child(0))?;
    let oracle = fisher_by_quadrature(sim, fx, ys, d_theta, n_oracle, seed.child(1))?;
    Ok(Check::at_most(
        "Fisher information vs quadrature",
        (est.estimate.value / oracle - 1.0).abs(),
        0.15,
        format!(
            "weights {:.4} +- {:.4}, quadrature {:.4}",
            est.estimate.value, est.estimate.stderr, oracle
        ),
    ))
}

/// Outcome of a replicated MLE study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOutcome {
    pub fisher: ExperimentFisher,
    pub replicas: Vec<Replica>,
    pub cramer_rao: CramerRaoReport,
    pub coverage: f64,
    pub bias_slope: Option<f64>,
}

/// Fisher information of the design at `theta`, replicated MLEs and the
/// Cramér–Rao comparison. With `slope_step`, the study is rerun at
/// `theta ± step` on the same seeds to difference the bias.
#[allow(clippy::too_many_arguments)]
pub fn mle_study(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    times: &[f64],
    n_replicas: usize,
    mle_opts: &MleOptions,
    fisher_opts: &FisherOptions,
    slope_step: Option<f64>,
    seed: StreamSeed,
) -> Result<StudyOutcome> {
    let fisher = fisher_info_experiment(sim, theta, x0, times, fisher_opts, seed.child(0))?;
    let replicas = mle_replicas(sim, theta, x0, times, n_replicas, mle_opts, seed.child(1))?;
    let est: Vec<f64> = replicas.iter().map(|r| r.theta_hat).collect();
    let slope = match slope_step {
        Some(h) => {
            let mean = |th: f64| -> Result<f64> {
                let r = mle_replicas(sim, th, x0, times, n_replicas, mle_opts, seed.child(1))?;
                Ok(r.iter().map(|r| r.theta_hat).sum::<f64>() / r.len() as f64)
            };
            Some(bias_slope(theta - h, mean(theta - h)?, theta + h, mean(theta + h)?))
        }
        None => None,
    };
    let cramer_rao = cramer_rao_report(theta, &est, fisher.total.value, Some(fisher.total.stderr), slope)?;
    let coverage = coverage(theta, &est, fisher.total.value, 3.0);
    Ok(StudyOutcome {
        fisher,
        replicas,
        cramer_rao,
        coverage,
        bias_slope: slope,
    })
}

pub fn study_checks(s: &StudyOutcome) -> Vec<Check> {
    let cr = &s.cramer_rao;
    vec![
        Check::at_least(
            "MSE over Cramer-Rao bound",
            cr.ratio,
            1.0 - 3.0 * cr.ratio_stderr,
            format!(
                "MSE {:.4e}, bound {:.4e}, ratio {:.3} +- {:.3}, I = {:.3} +- {:.3}",
                cr.mse, cr.bound, cr.ratio, cr.ratio_stderr, cr.fisher, s.fisher.total.stderr
            ),
        ),
        Check::at_least(
            "MLE within 3 I^-1/2",
            s.coverage,
            0.9,
            format!("{} replicas, mean {:.4}", cr.n_replicas, cr.mean_estimate),
        ),
    ]
}

/// `count` equally spaced points between the 5 % and 95 % sample quantiles
/// of the batch, rounded to 1e-3.
pub fn quantile_grid(batch: &TerminalBatch, count: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = batch.states.iter().map(|s| s.x).collect();
    xs.sort_by(f64::total_cmp);
    let q = |p: f64| xs[((xs.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.05), q(0.95));
    (0..count)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            (v * 1e3).round() / 1e3
        })
        .collect()
}

/// Sizes of the `validate` suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSizes {
    pub n_paths: usize,
    pub n_fixed_paths: usize,
}

/// Everything except the Fisher and MLE studies, which need much larger
/// samples to be conclusive.
pub fn run_suite(
    sim: &Simulator,
    assumption: &AssumptionReport,
    fx: Fixture,
    sizes: SuiteSizes,
    seed: StreamSeed,
) -> Result<Vec<Check>> {
    let n = sizes.n_paths;
    let mut checks = assumption_checks(assumption);
    checks.push(drift_check(sim, 5.0));
    checks.extend(stencil_checks(sim, fx, sizes.n_fixed_paths, seed.child(0))?);
    checks.push(closed_form_check(sim, fx, sizes.n_fixed_paths.max(100), seed.child(1))?);
    let batch = TerminalBatch::simulate(sim, fx.theta, fx.x0, fx.t, n, seed.child(2))?;
    checks.extend(zero_mean_checks(&batch));
    checks.push(drop_rate_check(sim, &batch));
    let ys = quantile_grid(&batch, 11);
    checks.push(dual_density_check(&batch, &ys));
    checks.extend(kde_checks(sim, &batch, &ys, 10 * n, seed.child(3))?);
    let ys7 = quantile_grid(&batch, 7);
    checks.push(score_fd_check(sim, &batch, &ys7, 1e-2, n, seed.child(4))?);
    checks.extend(score_duality_checks(sim, fx, n, seed.child(5))?);
    checks.push(malliavin_duality_check(sim, fx, n, seed.child(6))?);
    checks.extend(girsanov_checks(sim, fx.t, n, seed.child(7))?);
    Ok(checks)
}
