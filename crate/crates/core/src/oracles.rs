//! Brute-force validators for the variation stack and the weights.
//!
//! The stochastic derivative is the derivative under the amplitude flow
//! `u ↦ Q_c(u)` applied to every jump up to the horizon. Fixing a jump list
//! and re-solving on perturbed amplitudes therefore gives finite-difference
//! references for `DX`, `D²X`, `D³X`, and re-solving at shifted θ gives
//! references for `∂_θX` and `D(∂_θX)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{paired_z, par_paths};
use crate::levy_model::{GirsanovDensity, JumpRecord, LevyModel, PerturbationSpec};
use crate::rng::StreamSeed;
use crate::stats::{correlation, MCEstimate, MeanAccumulator};
use crate::variation::Simulator;
use crate::weights::WeightSet;

/// Moves every amplitude with `τ ≤ horizon` through `Q_c`.
pub fn perturb_jumps(jumps: &[JumpRecord], c: f64, horizon: f64, spec: &PerturbationSpec) -> Result<Vec<JumpRecord>> {
    jumps
        .iter()
        .map(|j| {
            Ok(if j.tau <= horizon {
                JumpRecord {
                    tau: j.tau,
                    u: spec.q_flow(j.u, c)?,
                }
            } else {
                *j
            })
        })
        .collect()
}

/// Engine value against its finite-difference reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilResidual {
    pub quantity: String,
    pub engine: f64,
    pub stencil: f64,
    /// `|engine − stencil| / |engine|`, or the absolute difference when the
    /// engine value is exactly zero
    pub rel_error: f64,
}

impl StencilResidual {
    fn new(quantity: &str, engine: f64, stencil: f64) -> Self {
        let diff = (engine - stencil).abs();
        Self {
            quantity: quantity.to_string(),
            engine,
            stencil,
            rel_error: if engine == 0.0 { diff } else { diff / engine.abs() },
        }
    }
}

/// Residuals of `DX`, `D²X`, `D³X` against stencils in `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResiduals {
    pub c: f64,
    pub dx: StencilResidual,
    pub d2x: StencilResidual,
    pub d3x: StencilResidual,
}

/// Central first and second differences of `X` with step `c`. `D³X` uses the
/// five-point second difference of `DX` re-solved on the moved jumps.
pub fn fd_variation_check(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    horizon: f64,
    jumps: &[JumpRecord],
    c: f64,
) -> Result<VariationResiduals> {
    let x_at = |shift: f64| -> Result<f64> {
        let moved = perturb_jumps(jumps, shift, horizon, &sim.spec)?;
        sim.terminal_x(theta, x0, horizon, &moved)
    };
    // d/dc X(Q_c) = DX(Q_c), so D³X is the second c-derivative of DX
    // re-solved on the moved jumps. A third difference of X alone loses too
    // many digits when D³X nearly cancels along a path.
    let dx_at = |shift: f64| -> Result<f64> {
        let moved = perturb_jumps(jumps, shift, horizon, &sim.spec)?;
        Ok(sim.terminal_state(theta, x0, horizon, &moved)?.dx)
    };
    let engine = sim.terminal_state(theta, x0, horizon, jumps)?;
    let x0c = x_at(0.0)?;
    let (p1, m1) = (x_at(c)?, x_at(-c)?);
    let d3x = (-dx_at(2.0 * c)? + 16.0 * dx_at(c)? - 30.0 * engine.dx + 16.0 * dx_at(-c)? - dx_at(-2.0 * c)?)
        / (12.0 * c * c);
    Ok(VariationResiduals {
        c,
        dx: StencilResidual::new("DX", engine.dx, (p1 - m1) / (2.0 * c)),
        d2x: StencilResidual::new("D2X", engine.d2x, (p1 - 2.0 * x0c + m1) / (c * c)),
        d3x: StencilResidual::new("D3X", engine.d3x, d3x),
    })
}

/// Residuals of `∂_θX` and `D(∂_θX)` against stencils in θ and `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaResiduals {
    pub d_theta: f64,
    pub c: f64,
    pub dtheta_x: StencilResidual,
    pub d_dtheta_x: StencilResidual,
}

/// Central difference in θ for `∂_θX`; the mixed four-point stencil
/// `[X(θ+Δ,c) − X(θ+Δ,−c) − X(θ−Δ,c) + X(θ−Δ,−c)] / 4cΔ` for `D(∂_θX)`.
pub fn theta_fd_check(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    horizon: f64,
    jumps: &[JumpRecord],
    d_theta: f64,
    c: f64,
) -> Result<ThetaResiduals> {
    let engine = sim.terminal_state(theta, x0, horizon, jumps)?;
    let up = perturb_jumps(jumps, c, horizon, &sim.spec)?;
    let down = perturb_jumps(jumps, -c, horizon, &sim.spec)?;
    let x = |th: f64, j: &[JumpRecord]| sim.terminal_x(th, x0, horizon, j);
    let (tp, tm) = (theta + d_theta, theta - d_theta);
    let dtheta = (x(tp, jumps)? - x(tm, jumps)?) / (2.0 * d_theta);
    let mixed = (x(tp, &up)? - x(tp, &down)? - x(tm, &up)? + x(tm, &down)?) / (4.0 * c * d_theta);
    Ok(ThetaResiduals {
        d_theta,
        c,
        dtheta_x: StencilResidual::new("dThetaX", engine.dtheta_x, dtheta),
        d_dtheta_x: StencilResidual::new("dDThetaX", engine.d_dtheta_x, mixed),
    })
}

/// `E[f′(X_t) DX_t]` against `E[f(X_t) δ(1)]` on the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResult {
    pub derivative_side: MCEstimate,
    pub divergence_side: MCEstimate,
    /// paired z-score of the difference
    pub z: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn duality_check<F, G>(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    t: f64,
    f: F,
    f_prime: G,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<DualityResult>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    sim.drift.check_parameter(theta)?;
    let rows: Vec<Result<(f64, f64)>> = par_paths(n_paths, |i| {
        let s = sim.simulate_terminal(theta, x0, t, &mut seed.path_rng(i))?;
        Ok((f_prime(s.x) * s.dx, f(s.x) * s.delta1))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let est = |v: &[f64]| MCEstimate::from_accumulator(&v.iter().copied().collect(), 0, seed.seed);
    Ok(DualityResult {
        derivative_side: est(&a),
        divergence_side: est(&b),
        z: paired_z(&a, &b),
    })
}

/// Monte Carlo checks of the change of measure under `Q_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub c: f64,
    /// `E[κ_c]`, which must be 1
    pub mean_kappa: MCEstimate,
    pub z_mean_kappa: f64,
    /// `E[F(Q_c ν)]`
    pub perturbed: MCEstimate,
    /// `E[F(ν) κ_c]`
    pub reweighted: MCEstimate,
    pub z_change_of_variables: f64,
}

/// `functional` sees the jump list of one configuration. It should not
/// depend on jumps within reach of the truncation level, where the flow
/// moves mass out of the simulated region.
#[allow(clippy::too_many_arguments)]
pub fn girsanov_mc_check<F>(
    model: &LevyModel,
    spec: &PerturbationSpec,
    eps: f64,
    horizon: f64,
    functional: F,
    c: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<GirsanovReport>
where
    F: Fn(&[JumpRecord]) -> f64 + Sync,
{
    let truncated = model.truncated(eps)?;
    let density = GirsanovDensity::new(model, spec, c, horizon, eps)?;
    let rows: Vec<Result<[f64; 3]>> = par_paths(n_paths, |i| {
        let jumps = truncated.sample_jumps(horizon, &mut seed.path_rng(i));
        let kappa = density.log_density(&jumps).exp();
        let moved = perturb_jumps(&jumps, c, horizon, spec)?;
        Ok([kappa, functional(&moved), functional(&jumps) * kappa])
    });
    let rows: Vec<[f64; 3]> = rows.into_iter().collect::<Result<_>>()?;
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let (kappa, lhs, rhs) = (col(0), col(1), col(2));
    let est = |v: &[f64]| MCEstimate::from_accumulator(&v.iter().copied().collect(), 0, seed.seed);
    let mean_kappa = est(&kappa);
    Ok(GirsanovReport {
        c,
        z_mean_kappa: (mean_kappa.value - 1.0) / mean_kappa.stderr,
        mean_kappa,
        perturbed: est(&lhs),
        reweighted: est(&rhs),
        z_change_of_variables: paired_z(&lhs, &rhs),
    })
}

/// Sample correlation between `(κ_c − 1)/c` and `δ(1) = Σχ(uᵢ) − T∫χdμ`
/// for each `c`, on common configurations.
pub fn girsanov_linearization(
    model: &LevyModel,
    spec: &PerturbationSpec,
    eps: f64,
    horizon: f64,
    cs: &[f64],
    n_paths: usize,
    seed: StreamSeed,
) -> Result<Vec<(f64, f64)>> {
    let truncated = model.truncated(eps)?;
    let comp = model.compensator_integrals(spec, eps)?;
    let configs: Vec<Vec<JumpRecord>> = par_paths(n_paths, |i| truncated.sample_jumps(horizon, &mut seed.path_rng(i)));
    let density = model.density.as_ref();
    let delta1: Vec<f64> = configs
        .iter()
        .map(|jumps| {
            jumps
                .iter()
                .filter(|j| j.tau <= horizon)
                .map(|j| spec.chi(j.u, density).unwrap_or(0.0))
                .sum::<f64>()
                - horizon * comp.chi_integral
        })
        .collect();
    cs.iter()
        .map(|&c| {
            let g = GirsanovDensity::new(model, spec, c, horizon, eps)?;
            let q: Vec<f64> = configs.iter().map(|j| g.log_density(j).exp_m1() / c).collect();
            Ok((c, correlation(&q, &delta1)))
        })
        .collect()
}

/// Terminal stacks of path `i` at every θ in `thetas`, all driven by the
/// jump list of stream `i`; `None` when any of them is degenerate.
pub fn common_jump_states(
    sim: &Simulator,
    thetas: &[f64],
    x0: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<Vec<Option<Vec<crate::variation::VariationState>>>> {
    for &th in thetas {
        sim.drift.check_parameter(th)?;
    }
    Ok(par_paths(n_paths, |i| {
        let jumps = sim.sample_jumps(t, &mut seed.path_rng(i));
        thetas
            .iter()
            .map(|&th| {
                let s = sim.terminal_state(th, x0, t, &jumps).ok()?;
                WeightSet::from_state(&s).valid.then_some(s)
            })
            .collect()
    }))
}

/// Central difference in θ of `log p(x, y)` from the density weights on
/// common jump lists. The error bar is the paired per-path error of the
/// linearized log difference.
#[allow(clippy::too_many_arguments)]
pub fn log_density_theta_fd(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    ys: &[f64],
    t: f64,
    d_theta: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<Vec<MCEstimate>> {
    let rows = common_jump_states(sim, &[theta - d_theta, theta + d_theta], x0, t, n_paths, seed)?;
    let rows: Vec<Vec<crate::variation::VariationState>> = rows.into_iter().flatten().collect();
    let n_dropped = n_paths - rows.len();
    let term = |s: &crate::variation::VariationState, y: f64| {
        let xi = crate::weights::weight_xi(s).unwrap_or(0.0);
        if y >= x0 {
            if s.x > y {
                xi
            } else {
                0.0
            }
        } else if s.x <= y {
            -xi
        } else {
            0.0
        }
    };
    Ok(ys
        .iter()
        .map(|&y| {
            let lo: Vec<f64> = rows.iter().map(|r| term(&r[0], y)).collect();
            let hi: Vec<f64> = rows.iter().map(|r| term(&r[1], y)).collect();
            let p_lo = crate::stats::compensated_sum(lo.iter().copied()) / lo.len() as f64;
            let p_hi = crate::stats::compensated_sum(hi.iter().copied()) / hi.len() as f64;
            let value = (p_hi.ln() - p_lo.ln()) / (2.0 * d_theta);
            let lin: MeanAccumulator = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| (b / p_hi - a / p_lo) / (2.0 * d_theta))
                .collect();
            MCEstimate {
                value,
                stderr: lin.stderr(),
                n_paths: rows.len(),
                n_dropped,
                seed: seed.seed,
                flags: Vec::new(),
            }
        })
        .collect())
}

/// Monte Carlo means of the three weights, each of which must vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroMeanReport {
    pub xi: MCEstimate,
    pub xi1: MCEstimate,
    pub xi2: MCEstimate,
    pub n_dropped: usize,
}

pub fn zero_mean_check(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<ZeroMeanReport> {
    let batch = crate::estimators::TerminalBatch::simulate(sim, theta, x0, t, n_paths, seed)?;
    let pick = |f: fn(&WeightSet) -> f64| batch.mean_of(|_, w| f(w));
    Ok(ZeroMeanReport {
        xi: pick(|w| w.xi),
        xi1: pick(|w| w.xi1),
        xi2: pick(|w| w.xi2),
        n_dropped: batch.n_dropped,
    })
}

/// `(E[DX⁻²], E[DX⁴])` over a batch: finite and stable across seeds when
/// the negative moments of `DX` are controlled.
pub fn dx_moments(
    sim: &Simulator,
    theta: f64,
    x0: f64,
    t: f64,
    n_paths: usize,
    seed: StreamSeed,
) -> Result<(MCEstimate, MCEstimate)> {
    let batch = crate::estimators::TerminalBatch::simulate(sim, theta, x0, t, n_paths, seed)?;
    let inv: MeanAccumulator = batch.states.iter().map(|s| s.dx.powi(-2)).collect();
    let pos: MeanAccumulator = batch.states.iter().map(|s| s.dx.powi(4)).collect();
    Ok((
        MCEstimate::from_accumulator(&inv, batch.n_dropped, seed.seed),
        MCEstimate::from_accumulator(&pos, batch.n_dropped, seed.seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{DriftModel, FlatDrift, LinearDrift, TanhDrift};
    use crate::levy_model::TemperedStable;
    use std::sync::Arc;

    fn simulator(drift: Arc<dyn DriftModel>) -> Simulator {
        let ts = TemperedStable::symmetric(0.5, 1.0, 1.0).unwrap();
        let model = LevyModel::new(Arc::new(ts), 1.0, 0.0).unwrap();
        let spec = PerturbationSpec::new(1.0, 0.5).unwrap();
        let eps = model.default_truncation(&spec, 1.0, 20.0).unwrap();
        Simulator::new(model, spec, drift, eps, 1e-3).unwrap()
    }

    fn linear() -> Arc<dyn DriftModel> {
        Arc::new(LinearDrift {
            theta_min: 0.1,
            theta_max: 3.0,
        })
    }

    #[test]
    fn perturbation_respects_horizon_and_group_law() {
        let spec = PerturbationSpec::new(1.0, 0.5).unwrap();
        let jumps = vec![
            JumpRecord { tau: 0.1, u: 0.2 },
            JumpRecord { tau: 0.5, u: -0.7 },
            JumpRecord { tau: 1.5, u: 0.3 },
        ];
        assert_eq!(perturb_jumps(&jumps, 0.0, 1.0, &spec).unwrap(), jumps);
        let moved = perturb_jumps(&jumps, 0.4, 1.0, &spec).unwrap();
        assert_eq!(moved[2], jumps[2]);
        assert!((moved[0].u - 0.2 / (1.0 - 0.2 * 0.4)).abs() < 1e-15);
        let two = perturb_jumps(&perturb_jumps(&jumps, 0.3, 1.0, &spec).unwrap(), -0.5, 1.0, &spec).unwrap();
        let one = perturb_jumps(&jumps, -0.2, 1.0, &spec).unwrap();
        for (a, b) in two.iter().zip(&one) {
            assert!((a.u - b.u).abs() < 1e-9);
        }
    }

    #[test]
    fn no_perturbable_jumps_gives_zero_stencils() {
        let sim = simulator(linear());
        let jumps = vec![JumpRecord { tau: 0.3, u: 1.4 }, JumpRecord { tau: 0.6, u: -2.0 }];
        let r = fd_variation_check(&sim, 1.0, 1.0, 1.0, &jumps, 1e-3).unwrap();
        for s in [&r.dx, &r.d2x, &r.d3x] {
            assert_eq!(s.engine, 0.0);
            assert_eq!(s.stencil, 0.0);
        }
    }

    #[test]
    fn single_jump_stencil_matches_closed_form() {
        let sim = simulator(linear());
        let (theta, tau, u) = (1.0, 0.4, 0.3);
        let r = fd_variation_check(&sim, theta, 1.0, 1.0, &[JumpRecord { tau, u }], 1e-3).unwrap();
        let expect = (-theta * (1.0 - tau)).exp() * u * u;
        assert!((r.dx.stencil - expect).abs() < 1e-6 * expect);
        assert!(r.dx.rel_error < 1e-6);
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let sim = simulator(Arc::new(TanhDrift {
            theta_min: 0.1,
            theta_max: 3.0,
        }));
        let jumps = sim.sample_jumps(1.0, &mut StreamSeed::new(1).path_rng(0));
        let coarse = fd_variation_check(&sim, 1.0, 0.5, 1.0, &jumps, 2e-2).unwrap();
        let fine = fd_variation_check(&sim, 1.0, 0.5, 1.0, &jumps, 1e-2).unwrap();
        let ratio = coarse.dx.rel_error / fine.dx.rel_error;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn stencils_match_on_sampled_paths() {
        for drift in [
            linear(),
            Arc::new(TanhDrift {
                theta_min: 0.1,
                theta_max: 3.0,
            }) as _,
        ] {
            let sim = simulator(drift);
            for i in 0..5 {
                let jumps = sim.sample_jumps(1.0, &mut StreamSeed::new(2).path_rng(i));
                let r = fd_variation_check(&sim, 1.0, 1.0, 1.0, &jumps, 1e-3).unwrap();
                assert!(r.dx.rel_error < 1e-4, "{r:?}");
                assert!(r.d2x.rel_error < 1e-3, "{r:?}");
                assert!(r.d3x.rel_error < 1e-3, "{r:?}");
                let t = theta_fd_check(&sim, 1.0, 1.0, 1.0, &jumps, 1e-4, 1e-3).unwrap();
                assert!(t.dtheta_x.rel_error < 1e-6, "{t:?}");
                assert!(t.d_dtheta_x.rel_error < 1e-3, "{t:?}");
            }
        }
    }

    #[test]
    fn theta_free_drift_has_zero_theta_stencils() {
        let sim = simulator(Arc::new(FlatDrift {
            rate: 1.0,
            theta_min: 0.1,
            theta_max: 3.0,
        }));
        let jumps = sim.sample_jumps(1.0, &mut StreamSeed::new(3).path_rng(0));
        let t = theta_fd_check(&sim, 1.0, 1.0, 1.0, &jumps, 1e-4, 1e-3).unwrap();
        assert_eq!((t.dtheta_x.engine, t.dtheta_x.stencil), (0.0, 0.0));
        assert_eq!((t.d_dtheta_x.engine, t.d_dtheta_x.stencil), (0.0, 0.0));
    }

    #[test]
    fn constant_test_function_has_zero_duality_sides() {
        let sim = simulator(linear());
        let r = duality_check(&sim, 1.0, 1.0, 1.0, |_| 0.0, |_| 0.0, 100, StreamSeed::new(4)).unwrap();
        assert_eq!(r.derivative_side.value, 0.0);
        assert_eq!(r.divergence_side.value, 0.0);
    }

    #[test]
    fn kappa_has_unit_mean() {
        let sim = simulator(linear());
        let r = girsanov_mc_check(
            &sim.model,
            &sim.spec,
            sim.comp.eps_trunc,
            1.0,
            |_| 1.0,
            1e-2,
            20_000,
            StreamSeed::new(5),
        )
        .unwrap();
        assert!(r.z_mean_kappa.abs() < 4.0, "{r:?}");
        assert!(r.z_change_of_variables.abs() < 4.0, "{r:?}");
    }
}
