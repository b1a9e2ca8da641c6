//! Simulated likelihood, maximum likelihood, Fisher information of a
//! discretely observed path, and Cramér–Rao diagnostics.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{par_paths, TerminalBatch};
use crate::rng::StreamSeed;
use crate::stats::{compensated_sum, MCEstimate, MeanAccumulator};
use crate::variation::Simulator;

/// Observations `x₁,…,xₙ` at times `t₁ < … < tₙ` of a path started at `x₀`
/// at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub x0: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub theta_true: Option<f64>,
}

impl ObservationSet {
    pub fn new(x0: f64, times: Vec<f64>, values: Vec<f64>, theta_true: Option<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidInput(format!(
                "need as many values as times (at least one), got {} and {}",
                times.len(),
                values.len()
            )));
        }
        if !(times[0] > 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "observation times must be positive and strictly increasing".into(),
            ));
        }
        if !x0.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observation values must be finite".into()));
        }
        Ok(Self {
            x0,
            times,
            values,
            theta_true,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(Δₖ, x_{k−1}, x_k)` for every transition.
    pub fn transitions(&self) -> Vec<(f64, f64, f64)> {
        let mut prev = (0.0, self.x0);
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &x)| {
                let tr = (t - prev.0, prev.1, x);
                prev = (t, x);
                tr
            })
            .collect()
    }

    /// Observations `start+1 ..= end` (1-based) as a set started at
    /// `x_start`, with times shifted to begin at 0.
    pub fn segment(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidInput(format!("bad segment {start}..{end}")));
        }
        let (t0, x0) = if start == 0 {
            (0.0, self.x0)
        } else {
            (self.times[start - 1], self.values[start - 1])
        };
        Self::new(
            x0,
            self.times[start..end].iter().map(|t| t - t0).collect(),
            self.values[start..end].to_vec(),
            self.theta_true,
        )
    }

    /// CSV with header `t,x`; the first row is `(0, x₀)`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x"])?;
        w.write_record(["0".to_string(), format!("{:.17e}", self.x0)])?;
        for (t, x) in self.times.iter().zip(&self.values) {
            w.write_record([format!("{t:.17e}"), format!("{x:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `t` and `x` columns by name; other columns are ignored.
    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidInput(format!("observation file has no `{name}` column")))
        };
        let (it, ix) = (column("t")?, column("x")?);
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                raw.trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("data row {}: `{raw}` is not a number", line + 1)))
            };
            rows.push((field(it)?, field(ix)?));
        }
        let Some(&(t0, x0)) = rows.first() else {
            return Err(Error::InvalidInput("empty observation file".into()));
        };
        if t0 != 0.0 {
            return Err(Error::InvalidInput(format!(
                "first observation row must be the start point at t = 0, got t = {t0}"
            )));
        }
        let (times, values) = rows[1..].iter().copied().unzip();
        Self::new(x0, times, values, None)
    }
}

/// A path of the Markov chain observed at `times`, from one random stream.
pub fn simulate_observations(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    times: &[f64],
    seed: StreamSeed,
) -> Result<ObservationSet> {
    sim.drift.check_parameter(theta)?;
    let mut rng = seed.path_rng(0);
    let mut values = Vec::with_capacity(times.len());
    let (mut t, mut x) = (0.0, x0);
    for &tk in times {
        if tk <= t {
            return Err(Error::InvalidInput(
                "observation times must be strictly increasing".into(),
            ));
        }
        x = sim.simulate_x(theta, x, tk - t, &mut rng)?;
        values.push(x);
        t = tk;
    }
    ObservationSet::new(x0, times.to_vec(), values, Some(theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTerm {
    pub dt: f64,
    pub x_prev: f64,
    pub x_next: f64,
    pub density: MCEstimate,
    pub log_value: f64,
    /// `ĝ` at the observed pair, when a bandwidth was requested
    pub score: Option<MCEstimate>,
    /// the density estimate is within two standard errors of zero
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub theta: f64,
    /// Sum of the log terms; the standard error is the delta-method error
    /// `sqrt(Σ (se_k/p̂_k)²)` over unflagged terms.
    pub estimate: MCEstimate,
    pub terms: Vec<LikelihoodTerm>,
    pub n_flagged: usize,
}

impl LogLikelihood {
    /// `Σₖ ĝₖ`, when scores were computed.
    pub fn score_sum(&self) -> Option<MCEstimate> {
        let mut value = Vec::new();
        let mut var = Vec::new();
        for t in &self.terms {
            let s = t.score.as_ref()?;
            value.push(s.value);
            var.push(s.stderr * s.stderr);
        }
        Some(MCEstimate {
            value: compensated_sum(value),
            stderr: compensated_sum(var).sqrt(),
            n_paths: self.estimate.n_paths,
            n_dropped: self.estimate.n_dropped,
            seed: self.estimate.seed,
            flags: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodOptions {
    pub n_paths: usize,
    /// Replaces `log p̂` when `p̂` falls below `e^{log_floor}`.
    pub log_floor: f64,
    /// Bandwidth for per-transition scores; `None` skips them.
    pub score_bandwidth: Option<f64>,
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        Self {
            n_paths: 2000,
            log_floor: -20.0,
            score_bandwidth: None,
        }
    }
}

/// `Σₖ log p̂_{Δₖ}(x_{k−1}, xₖ)`; transition `k` always draws from stream
/// family `seed.child(k)`, so values at different θ share random numbers.
pub fn log_likelihood(
    sim: &Simulator,
    theta: f64,
    obs: &ObservationSet,
    opts: &LikelihoodOptions,
    seed: StreamSeed,
) -> Result<LogLikelihood> {
    sim.drift.check_parameter(theta)?;
    let transitions = obs.transitions();
    let terms: Vec<LikelihoodTerm> = transitions
        .par_iter()
        .enumerate()
        .map(|(k, &(dt, x_prev, x_next))| -> Result<LikelihoodTerm> {
            let stream = seed.child(k as u64);
            let batch = if opts.score_bandwidth.is_some() {
                TerminalBatch::simulate(sim, theta, x_prev, dt, opts.n_paths, stream)?
            } else {
                TerminalBatch::simulate_density_only(sim, theta, x_prev, dt, opts.n_paths, stream)?
            };
            let density = batch.density(x_next);
            let flagged = density.value <= 2.0 * density.stderr;
            let log_value = if density.value > 0.0 {
                density.value.ln().max(opts.log_floor)
            } else {
                opts.log_floor
            };
            let score = opts.score_bandwidth.map(|h| batch.score(x_next, h));
            Ok(LikelihoodTerm {
                dt,
                x_prev,
                x_next,
                density,
                log_value,
                score,
                flagged,
            })
        })
        .collect::<Result<_>>()?;
    let n_flagged = terms.iter().filter(|t| t.flagged).count();
    let value = compensated_sum(terms.iter().map(|t| t.log_value));
    let var = compensated_sum(
        terms
            .iter()
            .filter(|t| !t.flagged)
            .map(|t| (t.density.stderr / t.density.value).powi(2)),
    );
    let mut estimate = MCEstimate {
        value,
        stderr: var.sqrt(),
        n_paths: opts.n_paths,
        n_dropped: terms.iter().map(|t| t.density.n_dropped).sum(),
        seed: seed.seed,
        flags: Vec::new(),
    };
    if n_flagged > 0 {
        estimate.flag(format!(
            "{n_flagged} of {} transition densities indistinguishable from zero; log floor {} applied where non-positive",
            terms.len(),
            opts.log_floor
        ));
    }
    Ok(LogLikelihood {
        theta,
        estimate,
        terms,
        n_flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLEReport {
    pub theta_hat: f64,
    pub log_likelihood: f64,
    pub curve: Vec<CurvePoint>,
    /// the grid maximum is interior and golden-section refined it
    pub interior: bool,
    /// the curve varies by more than its noise level
    pub identifiable: bool,
    pub fisher: Option<f64>,
    pub cr_bound: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub bracket: (f64, f64),
    pub curve_points: usize,
    /// golden-section stops when the bracket is shorter than this
    pub tol: f64,
    pub likelihood: LikelihoodOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            bracket: (0.2, 2.9),
            curve_points: 15,
            tol: 1e-3,
            likelihood: LikelihoodOptions::default(),
        }
    }
}

/// Maximizes the common-random-number likelihood: a coarse curve over the
/// bracket, then golden-section search between the neighbours of the best
/// grid point.
pub fn mle(sim: &Simulator, obs: &ObservationSet, opts: &MleOptions, seed: StreamSeed) -> Result<MLEReport> {
    let (lo, hi) = opts.bracket;
    sim.drift.check_parameter(lo)?;
    sim.drift.check_parameter(hi)?;
    if !(lo < hi) || opts.curve_points < 3 {
        return Err(Error::InvalidInput(format!(
            "need lo < hi and at least 3 curve points, got ({lo}, {hi}) and {}",
            opts.curve_points
        )));
    }
    let lik = |theta: f64| log_likelihood(sim, theta, obs, &opts.likelihood, seed);
    let m = opts.curve_points;
    let mut curve = Vec::with_capacity(m);
    for i in 0..m {
        let theta = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let l = lik(theta)?;
        curve.push(CurvePoint {
            theta,
            value: l.estimate.value,
            stderr: l.estimate.stderr,
        });
    }
    let mut evaluations = m;
    let best = (0..m)
        .max_by(|&a, &b| curve[a].value.total_cmp(&curve[b].value))
        .expect("nonempty curve");
    let max = curve[best].value;
    let min = curve.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let noise = compensated_sum(curve.iter().map(|c| c.stderr)) / m as f64;
    let identifiable = max - min > noise;
    let mut flags = Vec::new();
    if !identifiable {
        flags.push(format!(
            "likelihood curve flat within noise (range {:.3e}, mean stderr {noise:.3e}); parameter unidentifiable",
            max - min
        ));
    }
    let interior = best > 0 && best < m - 1;
    let (theta_hat, value) = if interior && identifiable {
        let (mut a, mut b) = (curve[best - 1].theta, curve[best + 1].theta);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = lik(c)?.estimate.value;
        let mut fd = lik(d)?.estimate.value;
        evaluations += 2;
        while b - a > opts.tol {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = lik(c)?.estimate.value;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = lik(d)?.estimate.value;
            }
            evaluations += 1;
        }
        let (t, v) = if fc >= fd { (c, fc) } else { (d, fd) };
        if v >= max {
            (t, v)
        } else {
            (curve[best].theta, max)
        }
    } else {
        if !interior {
            flags.push(format!(
                "no interior maximum in [{lo}, {hi}]: curve peaks at the endpoint {}",
                curve[best].theta
            ));
        }
        (curve[best].theta, max)
    };
    Ok(MLEReport {
        theta_hat,
        log_likelihood: value,
        curve,
        interior,
        identifiable,
        fisher: None,
        cr_bound: None,
        n_paths: opts.likelihood.n_paths,
        seed: seed.seed,
        evaluations,
        flags,
    })
}

/// Fisher information of observing the chain at `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFisher {
    pub total: MCEstimate,
    pub per_step: Vec<MCEstimate>,
    pub n_flagged_scores: usize,
    pub debiased: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    pub n_outer: usize,
    pub n_inner: usize,
    /// kernel bandwidth; `None` uses Silverman's rule per inner batch
    pub bandwidth: Option<f64>,
    /// subtract the inner variance of `ĝ` from each `ĝ²`
    pub debias: bool,
}

/// `I(θ) = Σₖ E(g_{Δₖ}(X_{k−1}, X_k))²`.
///
/// Outer chain `j` is drawn from `seed.child(1)` stream `j`, so for a single
/// observation time the outer sample coincides with the one of
/// [`crate::estimators::estimate_fisher_onestep`]. Scores of the first step
/// share one inner batch (all chains start at `x₀`); later steps get an
/// inner batch per chain and step.
pub fn fisher_info_experiment(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    times: &[f64],
    opts: &FisherOptions,
    seed: StreamSeed,
) -> Result<ExperimentFisher> {
    sim.drift.check_parameter(theta)?;
    if opts.n_outer < 2 || opts.n_inner < 2 || times.is_empty() {
        return Err(Error::InvalidInput(
            "Fisher estimate needs n_outer, n_inner >= 2 and observation times".into(),
        ));
    }
    let outer_seed = seed.child(1);
    let inner_seed = seed.child(2);
    let chains: Vec<ObservationSet> = par_paths(opts.n_outer, |j| {
        let mut rng = outer_seed.path_rng(j);
        let mut values = Vec::with_capacity(times.len());
        let (mut t, mut x) = (0.0, x0);
        for &tk in times {
            x = sim.simulate_x(theta, x, tk - t, &mut rng)?;
            values.push(x);
            t = tk;
        }
        ObservationSet::new(x0, times.to_vec(), values, Some(theta))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let first = TerminalBatch::simulate(sim, theta, x0, times[0], opts.n_inner, inner_seed)?;
    let term = |batch: &TerminalBatch, y: f64| {
        let h = opts.bandwidth.unwrap_or_else(|| batch.silverman_bandwidth());
        let s = batch.score(y, h);
        let g2 = s.value * s.value - if opts.debias { s.stderr * s.stderr } else { 0.0 };
        (g2, s.is_flagged())
    };
    let rows: Vec<Vec<(f64, bool)>> = chains
        .par_iter()
        .enumerate()
        .map(|(j, chain)| -> Result<Vec<(f64, bool)>> {
            chain
                .transitions()
                .into_iter()
                .enumerate()
                .map(|(k, (dt, x_prev, x_next))| {
                    if k == 0 {
                        Ok(term(&first, x_next))
                    } else {
                        let s = inner_seed.child(k as u64).child(j as u64);
                        let batch = TerminalBatch::simulate(sim, theta, x_prev, dt, opts.n_inner, s)?;
                        Ok(term(&batch, x_next))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n_flagged = rows.iter().flatten().filter(|(_, f)| *f).count();
    let totals: MeanAccumulator = rows
        .iter()
        .map(|r| compensated_sum(r.iter().map(|(g, _)| *g)))
        .collect();
    let mut total = MCEstimate::from_accumulator(&totals, 0, seed.seed);
    if n_flagged > 0 {
        total.flag(format!("{n_flagged} inner scores flagged"));
    }
    let per_step = (0..times.len())
        .map(|k| {
            let acc: MeanAccumulator = rows.iter().map(|r| r[k].0).collect();
            MCEstimate::from_accumulator(&acc, 0, seed.seed)
        })
        .collect();
    Ok(ExperimentFisher {
        total,
        per_step,
        n_flagged_scores: n_flagged,
        debiased: opts.debias,
    })
}

/// Empirical mean squared error of an estimator against the bound
/// `(1 + d′(θ))²/I(θ) + d(θ)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerRaoReport {
    pub theta: f64,
    pub n_replicas: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub bias_slope: f64,
    pub fisher: f64,
    pub bound: f64,
    pub mse: f64,
    pub mse_stderr: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// `ratio ≥ 1 − 3·ratio_stderr`
    pub consistent: bool,
}

/// `bias_slope` is `d′(θ)`, typically a central difference of replica
/// means at neighbouring parameters (see [`bias_slope`]); `None` uses 0.
/// `fisher_stderr` widens the ratio's error bar when supplied.
pub fn cramer_rao_report(
    theta: f64,
    estimates: &[f64],
    fisher: f64,
    fisher_stderr: Option<f64>,
    bias_slope: Option<f64>,
) -> Result<CramerRaoReport> {
    if !(fisher > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Cramér–Rao bound needs positive Fisher information, got {fisher}"
        )));
    }
    if estimates.len() < 2 {
        return Err(Error::InvalidInput("need at least two replicas".into()));
    }
    let n = estimates.len();
    let mean = compensated_sum(estimates.iter().copied()) / n as f64;
    let bias = mean - theta;
    let slope = bias_slope.unwrap_or(0.0);
    let bound = (1.0 + slope).powi(2) / fisher + bias * bias;
    let sq: MeanAccumulator = estimates.iter().map(|t| (t - theta).powi(2)).collect();
    let mse = sq.mean();
    let mse_stderr = sq.stderr();
    let ratio = mse / bound;
    let rel_fisher = fisher_stderr.map_or(0.0, |s| s / fisher);
    // The bound scales like 1/I when the bias term is small.
    let ratio_stderr = ratio * ((mse_stderr / mse.max(f64::MIN_POSITIVE)).powi(2) + rel_fisher.powi(2)).sqrt();
    let ratio_stderr = if mse == 0.0 { 0.0 } else { ratio_stderr };
    Ok(CramerRaoReport {
        theta,
        n_replicas: n,
        mean_estimate: mean,
        bias,
        bias_slope: slope,
        fisher,
        bound,
        mse,
        mse_stderr,
        ratio,
        ratio_stderr,
        consistent: ratio >= 1.0 - 3.0 * ratio_stderr - 1e-12,
    })
}

/// One simulated data set and its maximum likelihood estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub index: usize,
    pub theta_hat: f64,
    pub log_likelihood: f64,
    pub interior: bool,
    pub identifiable: bool,
    pub flags: Vec<String>,
}

/// Simulation study: replica `r` observes the chain at `times` from
/// `seed.child(r).child(0)` and maximizes the likelihood with
/// `seed.child(r).child(1)`. Running the study at a neighbouring θ with the
/// same seed reuses every random number, which is what [`bias_slope`]
/// wants.
pub fn mle_replicas(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    times: &[f64],
    n_replicas: usize,
    opts: &MleOptions,
    seed: StreamSeed,
) -> Result<Vec<Replica>> {
    (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let s = seed.child(r as u64);
            let obs = simulate_observations(sim, theta, x0, times, s.child(0))?;
            let rep = mle(sim, &obs, opts, s.child(1))?;
            Ok(Replica {
                index: r,
                theta_hat: rep.theta_hat,
                log_likelihood: rep.log_likelihood,
                interior: rep.interior,
                identifiable: rep.identifiable,
                flags: rep.flags,
            })
        })
        .collect()
}

/// Fraction of estimates within `k·I^{-1/2}` of `theta`.
pub fn coverage(theta: f64, estimates: &[f64], fisher: f64, k: f64) -> f64 {
    let radius = k / fisher.sqrt();
    estimates.iter().filter(|t| (*t - theta).abs() <= radius).count() as f64 / estimates.len() as f64
}

/// Central difference of the bias from replica means at `θ ± Δ`.
pub fn bias_slope(theta_minus: f64, mean_minus: f64, theta_plus: f64, mean_plus: f64) -> f64 {
    ((mean_plus - theta_plus) - (mean_minus - theta_minus)) / (theta_plus - theta_minus)
}
