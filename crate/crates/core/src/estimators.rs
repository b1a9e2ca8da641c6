//! Monte Carlo estimators of the transition density, CDF, score and
//! one-step Fisher information.
//!
//! A [`TerminalBatch`] holds the terminal variation stacks of `n` paths
//! started at `x`; every estimator here is an average over one batch, so
//! evaluating many `y` from the same batch shares random numbers. Paths are
//! simulated in parallel from counter-based streams and reduced in path
//! order, which makes every estimate independent of the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamSeed;
use crate::stats::{compensated_sum, MCEstimate, MeanAccumulator};
use crate::variation::{Simulator, VariationState};
use crate::weights::WeightSet;

/// Default bound on the fraction of degenerate paths before an estimate is
/// flagged.
pub const DEFAULT_MAX_DROP_RATE: f64 = 1e-3;

/// Kernel localizations with fewer effective samples are flagged.
pub const MIN_KERNEL_ESS: f64 = 30.0;

/// Terminal states and weights of independent paths from one start point.
#[derive(Debug, Clone)]
pub struct TerminalBatch {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
    pub seed: u64,
    /// Paths whose solver or weights failed; excluded from every average.
    pub n_dropped: usize,
    pub max_drop_rate: f64,
    pub states: Vec<VariationState>,
    pub weights: Vec<WeightSet>,
}

/// Runs `f(i)` for `i < n` in parallel and returns the results in index order.
pub fn par_paths<T: Send, F: Fn(u64) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n as u64).into_par_iter().map(f).collect()
}

impl TerminalBatch {
    pub fn simulate(sim: &Simulator, theta: f64, x0: f64, t: f64, n_paths: usize, seed: StreamSeed) -> Result<Self> {
        sim.drift.check_parameter(theta)?;
        if !(t > 0.0) || n_paths == 0 {
            return Err(Error::InvalidInput(format!(
                "need t > 0 and at least one path, got t = {t}, n = {n_paths}"
            )));
        }
        let raw = par_paths(n_paths, |i| {
            let mut rng = seed.path_rng(i);
            sim.simulate_terminal(theta, x0, t, &mut rng)
        });
        Ok(Self::from_states(theta, x0, t, seed.seed, raw))
    }

    /// A batch carrying only what [`TerminalBatch::density`] and
    /// [`TerminalBatch::cdf_upper`] need; score and `δ(Ξ/DX)` averages of
    /// such a batch are NaN.
    pub fn simulate_density_only(
        sim: &Simulator,
        theta: f64,
        x0: f64,
        t: f64,
        n_paths: usize,
        seed: StreamSeed,
    ) -> Result<Self> {
        sim.drift.check_parameter(theta)?;
        if !(t > 0.0) || n_paths == 0 {
            return Err(Error::InvalidInput(format!(
                "need t > 0 and at least one path, got t = {t}, n = {n_paths}"
            )));
        }
        let raw = par_paths(n_paths, |i| {
            let jumps = sim.sample_jumps(t, &mut seed.path_rng(i));
            sim.density_state(theta, x0, t, &jumps)
        });
        let mut batch = Self::from_states(theta, x0, t, seed.seed, Vec::new());
        for r in raw {
            match r.map(|s| (WeightSet::density_only(&s), s)) {
                Ok((w, s)) if w.valid => {
                    batch.states.push(s);
                    batch.weights.push(w);
                }
                _ => batch.n_dropped += 1,
            }
        }
        Ok(batch)
    }

    /// Builds a batch from solver outcomes; failed solves count as dropped.
    pub fn from_states(theta: f64, x0: f64, t: f64, seed: u64, raw: Vec<Result<VariationState>>) -> Self {
        let mut states = Vec::with_capacity(raw.len());
        let mut weights = Vec::with_capacity(raw.len());
        let mut n_dropped = 0;
        for r in raw {
            match r {
                Ok(s) => {
                    let w = WeightSet::from_state(&s);
                    if w.valid {
                        states.push(s);
                        weights.push(w);
                    } else {
                        n_dropped += 1;
                    }
                }
                Err(_) => n_dropped += 1,
            }
        }
        Self {
            theta,
            x0,
            t,
            seed,
            n_dropped,
            max_drop_rate: DEFAULT_MAX_DROP_RATE,
            states,
            weights,
        }
    }

    pub fn n_valid(&self) -> usize {
        self.states.len()
    }

    pub fn drop_rate(&self) -> f64 {
        self.n_dropped as f64 / (self.n_dropped + self.n_valid()) as f64
    }

    fn finish(&self, acc: &MeanAccumulator) -> MCEstimate {
        let mut est = MCEstimate::from_accumulator(acc, self.n_dropped, self.seed);
        if self.drop_rate() > self.max_drop_rate {
            est.flag(format!(
                "drop rate {:.3e} exceeds {:.3e}",
                self.drop_rate(),
                self.max_drop_rate
            ));
        }
        est
    }

    /// Mean of `f` over the valid paths.
    pub fn mean_of<F: Fn(&VariationState, &WeightSet) -> f64>(&self, f: F) -> MCEstimate {
        let acc: MeanAccumulator = self.states.iter().zip(&self.weights).map(|(s, w)| f(s, w)).collect();
        self.finish(&acc)
    }

    /// `p(x,y) = E[Ξ 1{X>y}]` for `y ≥ x`, `−E[Ξ 1{X≤y}]` for `y < x`.
    pub fn density(&self, y: f64) -> MCEstimate {
        if y >= self.x0 {
            self.mean_of(|s, w| if s.x > y { w.xi } else { 0.0 })
        } else {
            self.mean_of(|s, w| if s.x <= y { -w.xi } else { 0.0 })
        }
    }

    /// `p(x,y) = E[(X−y)⁺ δ(Ξ/DX)]` for `y ≥ x` and `E[(y−X)⁺ δ(Ξ/DX)]`
    /// for `y < x`; the two differ by `E[(X−y) δ(Ξ/DX)] = 0`.
    pub fn density_v2(&self, y: f64) -> MCEstimate {
        if y >= self.x0 {
            self.mean_of(|s, w| (s.x - y).max(0.0) * w.xi2)
        } else {
            self.mean_of(|s, w| (y - s.x).max(0.0) * w.xi2)
        }
    }

    /// `P(X > y)` by plain Monte Carlo over the valid paths.
    pub fn cdf_upper(&self, y: f64) -> MCEstimate {
        self.mean_of(|s, _| if s.x > y { 1.0 } else { 0.0 })
    }

    /// Silverman's rule `1.06 σ̂ n^{-1/5}` for the terminal values.
    pub fn silverman_bandwidth(&self) -> f64 {
        let acc: MeanAccumulator = self.states.iter().map(|s| s.x).collect();
        1.06 * acc.variance().sqrt() * (acc.count() as f64).powf(-0.2)
    }

    /// Kernel-localized score `Σ Ξ¹ K_h(X−y) / Σ K_h(X−y)`.
    ///
    /// The standard error is the delta-method error of the ratio; a flag is
    /// raised when the effective sample size `ΣK/max K` is below 30.
    pub fn score(&self, y: f64, h: f64) -> MCEstimate {
        let k: Vec<f64> = self
            .states
            .iter()
            .map(|s| {
                let z = (s.x - y) / h;
                (-0.5 * z * z).exp()
            })
            .collect();
        let sum_k = compensated_sum(k.iter().copied());
        let max_k = k.iter().copied().fold(0.0, f64::max);
        let num = compensated_sum(k.iter().zip(&self.weights).map(|(k, w)| k * w.xi1));
        let n = self.n_valid();
        let value = if sum_k > 0.0 { num / sum_k } else { 0.0 };
        let resid = compensated_sum(k.iter().zip(&self.weights).map(|(k, w)| (k * (w.xi1 - value)).powi(2)));
        let stderr = if sum_k > 0.0 { resid.sqrt() / sum_k } else { f64::NAN };
        let mut est = MCEstimate {
            value,
            stderr,
            n_paths: n,
            n_dropped: self.n_dropped,
            seed: self.seed,
            flags: Vec::new(),
        };
        let ess = if max_k > 0.0 { sum_k / max_k } else { 0.0 };
        if ess < MIN_KERNEL_ESS {
            est.flag(format!("kernel effective sample size {ess:.1} below {MIN_KERNEL_ESS}"));
        }
        if self.drop_rate() > self.max_drop_rate {
            est.flag(format!(
                "drop rate {:.3e} exceeds {:.3e}",
                self.drop_rate(),
                self.max_drop_rate
            ));
        }
        est
    }

    /// Scores at `h/2`, `h` and `2h`, reported together so that bandwidth
    /// sensitivity is visible.
    pub fn score_bandwidths(&self, y: f64, h: f64) -> [(f64, MCEstimate); 3] {
        [0.5 * h, h, 2.0 * h].map(|b| (b, self.score(y, b)))
    }
}

pub fn estimate_density(
    sim: &Simulator,
    theta: f64,
    x: f64,
    y: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<MCEstimate> {
    Ok(TerminalBatch::simulate(sim, theta, x, t, n_paths, seed)?.density(y))
}

pub fn estimate_density_v2(
    sim: &Simulator,
    theta: f64,
    x: f64,
    y: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<MCEstimate> {
    Ok(TerminalBatch::simulate(sim, theta, x, t, n_paths, seed)?.density_v2(y))
}

pub fn estimate_cdf(
    sim: &Simulator,
    theta: f64,
    x: f64,
    y: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<MCEstimate> {
    Ok(TerminalBatch::simulate(sim, theta, x, t, n_paths, seed)?.cdf_upper(y))
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_score(
    sim: &Simulator,
    theta: f64,
    x: f64,
    y: f64,
    t: f64,
    n_paths: usize,
    h: f64,
    seed: StreamSeed,
) -> Result<MCEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(TerminalBatch::simulate(sim, theta, x, t, n_paths, seed)?.score(y, h))
}

/// Terminal values `X_t` of plain paths (no variation stack).
pub fn simulate_terminal_values(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<Vec<f64>> {
    sim.drift.check_parameter(theta)?;
    par_paths(n_paths, |i| {
        let mut rng = seed.path_rng(i);
        sim.simulate_x(theta, x0, t, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Three estimates of `∂_θ E f(X_t)` for a smooth test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `E[f′(X) ∂_θX]`
    pub pathwise: MCEstimate,
    /// `E[f(X) Ξ¹]`
    pub weighted: MCEstimate,
    /// central difference of `E f(X)` in θ on common random numbers
    pub finite_difference: MCEstimate,
    pub z_pathwise_weighted: f64,
    pub z_pathwise_fd: f64,
    pub z_weighted_fd: f64,
}

/// Paired z-score: the mean of `a − b` over the same paths divided by its
/// standard error.
pub fn paired_z(a: &[f64], b: &[f64]) -> f64 {
    let acc: MeanAccumulator = a.iter().zip(b).map(|(x, y)| x - y).collect();
    crate::stats::z_score(acc.mean(), acc.stderr(), 0.0)
}

#[allow(clippy::too_many_arguments)]
pub fn score_duality_check<F, G>(
    sim: &Simulator,
    theta: f64,
    x: f64,
    t: f64,
    f: F,
    f_prime: G,
    n_paths: usize,
    d_theta: f64,
    seed: StreamSeed,
) -> Result<DualityReport>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    sim.drift.check_parameter(theta - d_theta)?;
    sim.drift.check_parameter(theta + d_theta)?;
    let rows: Vec<Option<[f64; 3]>> = par_paths(n_paths, |i| {
        let jumps = sim.sample_jumps(t, &mut seed.path_rng(i));
        let s = sim.terminal_state(theta, x, t, &jumps).ok()?;
        let w = WeightSet::from_state(&s);
        if !w.valid {
            return None;
        }
        let up = sim.terminal_x(theta + d_theta, x, t, &jumps).ok()?;
        let down = sim.terminal_x(theta - d_theta, x, t, &jumps).ok()?;
        Some([
            f_prime(s.x) * s.dtheta_x,
            f(s.x) * w.xi1,
            (f(up) - f(down)) / (2.0 * d_theta),
        ])
    });
    let n_dropped = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<[f64; 3]> = rows.into_iter().flatten().collect();
    let column = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let (a, b, c) = (column(0), column(1), column(2));
    let est = |v: &[f64]| {
        let acc: MeanAccumulator = v.iter().copied().collect();
        MCEstimate::from_accumulator(&acc, n_dropped, seed.seed)
    };
    Ok(DualityReport {
        pathwise: est(&a),
        weighted: est(&b),
        finite_difference: est(&c),
        z_pathwise_weighted: paired_z(&a, &b),
        z_pathwise_fd: paired_z(&a, &c),
        z_weighted_fd: paired_z(&b, &c),
    })
}

/// One-step Fisher information `E(g_t(x, X_t))²`.
///
/// Outer samples `Y_j` are terminal values of plain paths; the score at
/// every `Y_j` is localized in one common inner batch from `x`. Each term
/// carries the inner Monte Carlo variance of `ĝ(Y_j)`; with `debias` that
/// variance is subtracted from `ĝ(Y_j)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub estimate: MCEstimate,
    pub bandwidth: f64,
    /// mean of the inner variances `se(ĝ(Y_j))²`
    pub mean_inner_variance: f64,
    pub n_flagged_scores: usize,
    pub debiased: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_fisher_onestep(
    sim: &Simulator,
    theta: f64,
    x: f64,
    t: f64,
    n_outer: usize,
    n_inner: usize,
    h: Option<f64>,
    debias: bool,
    seed: StreamSeed,
) -> Result<FisherEstimate> {
    let outer = simulate_terminal_values(sim, theta, x, t, n_outer, seed.child(1))?;
    let inner = TerminalBatch::simulate(sim, theta, x, t, n_inner, seed.child(2))?;
    Ok(fisher_from_batch(&inner, &outer, h, debias))
}

/// The Fisher average of squared scores at `ys`, localized in `inner`.
pub fn fisher_from_batch(inner: &TerminalBatch, ys: &[f64], h: Option<f64>, debias: bool) -> FisherEstimate {
    let h = h.unwrap_or_else(|| inner.silverman_bandwidth());
    let scores: Vec<MCEstimate> = ys.par_iter().map(|&y| inner.score(y, h)).collect();
    let n_flagged = scores.iter().filter(|s| s.is_flagged()).count();
    let terms: MeanAccumulator = scores
        .iter()
        .map(|s| {
            let g2 = s.value * s.value;
            if debias {
                g2 - s.stderr * s.stderr
            } else {
                g2
            }
        })
        .collect();
    let mean_inner_variance = compensated_sum(scores.iter().map(|s| s.stderr * s.stderr)) / ys.len() as f64;
    let mut estimate = MCEstimate::from_accumulator(&terms, inner.n_dropped, inner.seed);
    if n_flagged > 0 {
        estimate.flag(format!("{n_flagged} of {} inner scores flagged", ys.len()));
    }
    if mean_inner_variance > 0.1 * estimate.value.abs() {
        estimate.flag(format!(
            "inner score variance {mean_inner_variance:.3e} is large against the estimate; bandwidth or inner size too small"
        ));
    }
    FisherEstimate {
        estimate,
        bandwidth: h,
        mean_inner_variance,
        n_flagged_scores: n_flagged,
        debiased: debias,
    }
}
