//! One path of the SDE together with its Malliavin and parameter variations.
//!
//! Between jumps the stack follows a deterministic ODE advanced by RK4;
//! at each jump the amplitude-driven components are updated exactly.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::levy_model::{CompensatorIntegrals, JumpRecord, LevyModel, PerturbationSpec, TruncatedLevy};

/// Values at one time of `X`, `𝓔`, `DX`, `D²X`, `D³X`, `∂_θX`, `D(∂_θX)`,
/// `δ(1)` and `Dδ(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariationState {
    pub x: f64,
    pub cal_e: f64,
    pub dx: f64,
    pub d2x: f64,
    pub d3x: f64,
    pub dtheta_x: f64,
    pub d_dtheta_x: f64,
    pub delta1: f64,
    pub d_delta1: f64,
}

impl VariationState {
    pub fn initial(x0: f64) -> Self {
        Self {
            x: x0,
            cal_e: 1.0,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.cal_e,
            self.dx,
            self.d2x,
            self.d3x,
            self.dtheta_x,
            self.d_dtheta_x,
            self.delta1,
            self.d_delta1,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// A solved path: jumps, grid and the variation stack on the grid.
///
/// `states[k]` is the right limit at `grid[k]`; the left limits at jump
/// times are kept in `pre_jump`, parallel to `jumps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRealization {
    pub theta: f64,
    pub x0: f64,
    pub horizon: f64,
    pub seed: Option<u64>,
    pub jumps: Vec<JumpRecord>,
    pub grid: Vec<f64>,
    pub states: Vec<VariationState>,
    pub pre_jump: Vec<VariationState>,
}

impl PathRealization {
    pub fn terminal(&self) -> &VariationState {
        self.states.last().expect("grid holds at least t = 0")
    }

    pub fn write_states_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t", "x", "calE", "dX", "d2X", "d3X", "dThetaX", "dDThetaX", "delta1", "dDelta1",
        ])?;
        for (t, s) in self.grid.iter().zip(&self.states) {
            w.write_record(
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
                .map(|v| format!("{v:.17e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jumps_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "u"])?;
        for j in &self.jumps {
            w.write_record([format!("{:.17e}", j.tau), format!("{:.17e}", j.u)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>_states.csv` and `<stem>_jumps.csv` into `dir`.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<()> {
        let states = std::fs::File::create(dir.join(format!("{stem}_states.csv")))?;
        self.write_states_csv(std::io::BufWriter::new(states))?;
        let jumps = std::fs::File::create(dir.join(format!("{stem}_jumps.csv")))?;
        self.write_jumps_csv(std::io::BufWriter::new(jumps))
    }
}

/// Everything needed to simulate paths of one model: the Lévy part, the
/// perturbation, the drift, the truncation and the ODE step bound.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: LevyModel,
    pub spec: PerturbationSpec,
    pub drift: Arc<dyn DriftModel>,
    pub truncation: TruncatedLevy,
    pub comp: CompensatorIntegrals,
    pub max_dt: f64,
}

/// Step bound `min(Δ/200, 10⁻³)` for a transition of length `horizon`.
pub fn default_step(horizon: f64) -> f64 {
    (horizon / 200.0).min(1e-3)
}

impl Simulator {
    pub fn new(
        model: LevyModel,
        spec: PerturbationSpec,
        drift: Arc<dyn DriftModel>,
        eps_trunc: f64,
        max_dt: f64,
    ) -> Result<Self> {
        if !(max_dt > 0.0 && max_dt.is_finite()) {
            return Err(Error::InvalidInput(format!("ODE step must be positive, got {max_dt}")));
        }
        let comp = model.compensator_integrals(&spec, eps_trunc)?;
        let truncation = model.truncated(eps_trunc)?;
        Ok(Self {
            model,
            spec,
            drift,
            truncation,
            comp,
            max_dt,
        })
    }

    pub fn with_step(&self, max_dt: f64) -> Self {
        Self { max_dt, ..self.clone() }
    }

    /// Constant part of `dX/dt`: triplet drift minus the compensator of
    /// the simulated small jumps.
    pub fn drift_shift(&self) -> f64 {
        self.model.z_drift - self.comp.small_jump_mean
    }

    pub fn sample_jumps<R: RngCore>(&self, horizon: f64, rng: &mut R) -> Vec<JumpRecord> {
        self.truncation.sample_jumps(horizon, rng)
    }

    fn rates(&self, theta: f64, y: &[f64; 7]) -> [f64; 7] {
        let [x, e, dx, d2x, d3x, dth, ddth] = *y;
        let d = self.drift.eval(theta, x);
        [
            d.a + self.drift_shift(),
            d.a_x * e,
            d.a_x * dx,
            d.a_xx * dx * dx + d.a_x * d2x,
            d.a_xxx * dx * dx * dx + 3.0 * d.a_xx * dx * d2x + d.a_x * d3x,
            d.a_x * dth + d.a_theta,
            d.a_xx * dx * dth + d.a_x * ddth + d.a_x_theta * dx,
        ]
    }

    /// One RK4 step of the flow between jumps.
    pub fn flow_step(&self, s: &VariationState, theta: f64, dt: f64) -> VariationState {
        let y = [s.x, s.cal_e, s.dx, s.d2x, s.d3x, s.dtheta_x, s.d_dtheta_x];
        let shifted = |k: &[f64; 7], h: f64| {
            let mut out = y;
            for i in 0..7 {
                out[i] += h * k[i];
            }
            out
        };
        let k1 = self.rates(theta, &y);
        let k2 = self.rates(theta, &shifted(&k1, 0.5 * dt));
        let k3 = self.rates(theta, &shifted(&k2, 0.5 * dt));
        let k4 = self.rates(theta, &shifted(&k3, dt));
        let mut n = y;
        for i in 0..7 {
            n[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        VariationState {
            x: n[0],
            cal_e: n[1],
            dx: n[2],
            d2x: n[3],
            d3x: n[4],
            dtheta_x: n[5],
            d_dtheta_x: n[6],
            delta1: s.delta1 - dt * self.comp.chi_integral,
            d_delta1: s.d_delta1,
        }
    }

    /// Exact update at a jump of amplitude `u`.
    pub fn jump_update(&self, s: &VariationState, u: f64) -> VariationState {
        let mut n = *s;
        n.x += u;
        if u.abs() >= self.spec.u0 || u == 0.0 {
            return n;
        }
        let (r, r1, r2) = (self.spec.rho(u), self.spec.rho_d1(u), self.spec.rho_d2(u));
        let density = self.model.density.as_ref();
        n.dx += r;
        n.d2x += r * r1;
        n.d3x += r * (r1 * r1 + r * r2);
        n.delta1 += self.spec.chi(u, density).unwrap_or(0.0);
        n.d_delta1 += self.spec.chi_d1(u, density).unwrap_or(0.0) * r;
        n
    }

    /// Drives the stack through `[0, horizon]`, calling `visit(t, state,
    /// pre_jump)` after every step and jump. Jumps after `horizon` are
    /// ignored.
    fn integrate<F>(
        &self,
        theta: f64,
        x0: f64,
        horizon: f64,
        jumps: &[JumpRecord],
        mut visit: F,
    ) -> Result<VariationState>
    where
        F: FnMut(f64, &VariationState, Option<&VariationState>),
    {
        let mut s = VariationState::initial(x0);
        visit(0.0, &s, None);
        let mut t = 0.0;
        let events = jumps
            .iter()
            .filter(|j| j.tau <= horizon)
            .map(|j| (j.tau, Some(j.u)))
            .chain(std::iter::once((horizon, None)));
        for (t_next, jump) in events {
            let span = t_next - t;
            if span < 0.0 {
                return Err(Error::InvalidInput(format!("jump times not increasing at {t_next}")));
            }
            if span > 0.0 {
                let n = (span / self.max_dt).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for k in 1..=n {
                    s = self.flow_step(&s, theta, dt);
                    let tk = if k == n { t_next } else { t + k as f64 * dt };
                    if !s.is_finite() {
                        return Err(Error::InvalidPath { t: tk });
                    }
                    if k < n || jump.is_none() {
                        visit(tk, &s, None);
                    }
                }
            }
            t = t_next;
            if let Some(u) = jump {
                let pre = s;
                s = self.jump_update(&s, u);
                if !s.is_finite() {
                    return Err(Error::InvalidPath { t });
                }
                visit(t, &s, Some(&pre));
            }
        }
        Ok(s)
    }

    /// Terminal variation stack for a given jump list.
    pub fn terminal_state(&self, theta: f64, x0: f64, horizon: f64, jumps: &[JumpRecord]) -> Result<VariationState> {
        self.integrate(theta, x0, horizon, jumps, |_, _, _| {})
    }

    /// Full path on the solver grid for a given jump list.
    pub fn solve_path(&self, theta: f64, x0: f64, horizon: f64, jumps: Vec<JumpRecord>) -> Result<PathRealization> {
        self.drift.check_parameter(theta)?;
        let mut grid = Vec::new();
        let mut states = Vec::new();
        let mut pre_jump = Vec::new();
        self.integrate(theta, x0, horizon, &jumps, |t, s, pre| {
            grid.push(t);
            states.push(*s);
            if let Some(p) = pre {
                pre_jump.push(*p);
            }
        })?;
        let jumps = jumps.into_iter().filter(|j| j.tau <= horizon).collect();
        Ok(PathRealization {
            theta,
            x0,
            horizon,
            seed: None,
            jumps,
            grid,
            states,
            pre_jump,
        })
    }

    /// Samples jumps from `rng` and solves the path.
    pub fn simulate_path<R: RngCore>(&self, theta: f64, x0: f64, horizon: f64, rng: &mut R) -> Result<PathRealization> {
        let jumps = self.sample_jumps(horizon, rng);
        self.solve_path(theta, x0, horizon, jumps)
    }

    /// Samples jumps and returns the terminal stack only.
    pub fn simulate_terminal<R: RngCore>(
        &self,
        theta: f64,
        x0: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<VariationState> {
        let jumps = self.sample_jumps(horizon, rng);
        self.terminal_state(theta, x0, horizon, &jumps)
    }

    /// `X_horizon` alone, on the same grid as the full solver.
    pub fn terminal_x(&self, theta: f64, x0: f64, horizon: f64, jumps: &[JumpRecord]) -> Result<f64> {
        let shift = self.drift_shift();
        let f = |x: f64| self.drift.value(theta, x) + shift;
        let mut x = x0;
        let mut t = 0.0;
        let events = jumps
            .iter()
            .filter(|j| j.tau <= horizon)
            .map(|j| (j.tau, j.u))
            .chain(std::iter::once((horizon, 0.0)));
        for (t_next, u) in events {
            let span = t_next - t;
            if span > 0.0 {
                let n = (span / self.max_dt).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for _ in 0..n {
                    let k1 = f(x);
                    let k2 = f(x + 0.5 * dt * k1);
                    let k3 = f(x + 0.5 * dt * k2);
                    let k4 = f(x + dt * k3);
                    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
            }
            t = t_next;
            x += u;
            if !x.is_finite() {
                return Err(Error::InvalidPath { t });
            }
        }
        Ok(x)
    }

    pub fn simulate_x<R: RngCore>(&self, theta: f64, x0: f64, horizon: f64, rng: &mut R) -> Result<f64> {
        let jumps = self.sample_jumps(horizon, rng);
        self.terminal_x(theta, x0, horizon, &jumps)
    }

    /// Only the part of the stack the density weight `Ξ` needs: `x`, `dx`,
    /// `d2x` and `delta1`. The remaining fields keep their initial values.
    /// Same grid and scheme as [`Simulator::terminal_state`], so the four
    /// fields agree with it up to rounding.
    pub fn density_state(&self, theta: f64, x0: f64, horizon: f64, jumps: &[JumpRecord]) -> Result<VariationState> {
        let shift = self.drift_shift();
        let rates = |y: [f64; 3]| {
            let d = self.drift.eval(theta, y[0]);
            [d.a + shift, d.a_x * y[1], d.a_xx * y[1] * y[1] + d.a_x * y[2]]
        };
        let axpy = |y: [f64; 3], h: f64, k: [f64; 3]| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]];
        let mut s = VariationState::initial(x0);
        let mut y = [x0, 0.0, 0.0];
        let mut delta1 = 0.0;
        let mut t = 0.0;
        let density = self.model.density.as_ref();
        let events = jumps
            .iter()
            .filter(|j| j.tau <= horizon)
            .map(|j| (j.tau, Some(j.u)))
            .chain(std::iter::once((horizon, None)));
        for (t_next, jump) in events {
            let span = t_next - t;
            if span < 0.0 {
                return Err(Error::InvalidInput(format!("jump times not increasing at {t_next}")));
            }
            if span > 0.0 {
                let n = (span / self.max_dt).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for _ in 0..n {
                    let k1 = rates(y);
                    let k2 = rates(axpy(y, 0.5 * dt, k1));
                    let k3 = rates(axpy(y, 0.5 * dt, k2));
                    let k4 = rates(axpy(y, dt, k3));
                    for i in 0..3 {
                        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                    delta1 -= dt * self.comp.chi_integral;
                }
            }
            t = t_next;
            if let Some(u) = jump {
                y[0] += u;
                if u.abs() < self.spec.u0 && u != 0.0 {
                    let (r, r1) = (self.spec.rho(u), self.spec.rho_d1(u));
                    y[1] += r;
                    y[2] += r * r1;
                    delta1 += self.spec.chi(u, density).unwrap_or(0.0);
                }
            }
            if !(y.iter().all(|v| v.is_finite()) && delta1.is_finite()) {
                return Err(Error::InvalidPath { t });
            }
        }
        s.x = y[0];
        s.dx = y[1];
        s.d2x = y[2];
        s.delta1 = delta1;
        Ok(s)
    }
}

/// Terminal `DX`, `D²X` and `∂_θX` evaluated from their integral
/// representations using the stored `𝓔` and `X` along a solved path.
///
/// Jump sums are exact; time integrals use the trapezoid rule with the
/// endpoint-derivative correction, which is fourth order on smooth pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormTerminal {
    pub dx: f64,
    pub d2x: f64,
    pub dtheta_x: f64,
}

pub fn closed_form_terminal(sim: &Simulator, path: &PathRealization) -> ClosedFormTerminal {
    let spec = &sim.spec;
    let theta = path.theta;
    let shift = sim.drift_shift();
    let drift = sim.drift.as_ref();

    // Running integrals on the grid: I₁ = ∫ 𝓔⁻¹ a_θ ds (for ∂_θX),
    // J = ∫ a_xx DX ds (so D𝓔 = 𝓔 J), and the jump sums
    // S₁ = Σ 𝓔⁻¹ρ, S₂ = Σ (𝓔⁻¹ρρ′ − 𝓔⁻¹ J ρ).
    let mut i1 = 0.0;
    let mut j = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut jump_idx = 0;
    // Integrand values and time derivatives at the left end of a step.
    let parts = |s: &VariationState| {
        let d = drift.eval(theta, s.x);
        let xdot = d.a + shift;
        let inv_e = 1.0 / s.cal_e;
        // d/dt 𝓔⁻¹ = −a_x 𝓔⁻¹, d/dt DX = a_x DX
        let f_i1 = inv_e * d.a_theta;
        let df_i1 = inv_e * (-d.a_x * d.a_theta + d.a_x_theta * xdot);
        let f_j = d.a_xx * s.dx;
        let df_j = d.a_xxx * xdot * s.dx + d.a_xx * d.a_x * s.dx;
        (f_i1, df_i1, f_j, df_j)
    };
    for k in 1..path.grid.len() {
        let h = path.grid[k] - path.grid[k - 1];
        let at_jump = jump_idx < path.jumps.len() && path.grid[k] == path.jumps[jump_idx].tau;
        let right = if at_jump {
            &path.pre_jump[jump_idx]
        } else {
            &path.states[k]
        };
        if h > 0.0 {
            let (a0, da0, b0, db0) = parts(&path.states[k - 1]);
            let (a1, da1, b1, db1) = parts(right);
            i1 += 0.5 * h * (a0 + a1) + h * h / 12.0 * (da0 - da1);
            j += 0.5 * h * (b0 + b1) + h * h / 12.0 * (db0 - db1);
        }
        if at_jump {
            let u = path.jumps[jump_idx].u;
            let e = right.cal_e;
            let r = spec.rho(u);
            s1 += r / e;
            s2 += (r * spec.rho_d1(u) - j * r) / e;
            jump_idx += 1;
        }
    }
    let end = path.terminal();
    ClosedFormTerminal {
        dx: end.cal_e * s1,
        d2x: end.cal_e * j * s1 + end.cal_e * s2,
        dtheta_x: end.cal_e * i1,
    }
}
