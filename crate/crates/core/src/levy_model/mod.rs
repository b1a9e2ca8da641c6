//! Lévy measures, the amplitude perturbation and jump sampling.
//!
//! The driving process is `Z_t = c t + Σ_{|u|>1} u + compensated Σ_{|u|≤1} u`
//! with Lévy measure `μ(du) = σ(u) du`. Simulation truncates the jumps at
//! `ε_trunc`: jumps with `|u| > ε_trunc` are sampled exactly and the mean of
//! the compensated part `ε_trunc < |u| ≤ 1` is folded into the drift.

mod assumption;
mod girsanov;
mod perturbation;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_log, integrate_to_infinity, Integral, QuadratureOptions};

pub use assumption::{check_assumption_h, AssumptionReport, ClauseResult};
pub use girsanov::{girsanov_log_density, GirsanovDensity};
pub use perturbation::PerturbationSpec;

/// Density `σ` of the Lévy measure together with the derivatives the
/// perturbation calculus consumes, and an exact sampler for its restriction
/// to `|u| > ε`.
pub trait LevyDensity: fmt::Debug + Send + Sync {
    fn sigma(&self, u: f64) -> f64;
    fn sigma_d1(&self, u: f64) -> f64;
    fn sigma_d2(&self, u: f64) -> f64;

    /// `σ'/σ`.
    fn log_sigma_d1(&self, u: f64) -> f64 {
        self.sigma_d1(u) / self.sigma(u)
    }

    /// `(log σ)'' = (σ''σ − σ'²)/σ²`.
    fn log_sigma_d2(&self, u: f64) -> f64 {
        let s = self.sigma(u);
        let d1 = self.sigma_d1(u);
        (self.sigma_d2(u) * s - d1 * d1) / (s * s)
    }

    /// `κ` with `∫_{|u|≥1} |u|^{2+κ} μ(du) < ∞`.
    fn tail_moment_order(&self) -> f64;

    fn has_side(&self, positive: bool) -> bool {
        let _ = positive;
        true
    }

    /// Draws `|u|` from the normalized restriction of `μ` to one side of
    /// `{|u| > eps}`.
    fn sample_side(&self, positive: bool, eps: f64, rng: &mut dyn RngCore) -> f64;
}

/// Tempered stable density `scale_± e^{-λ_±|u|} |u|^{-1-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperedStable {
    pub alpha: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub scale_plus: f64,
    pub scale_minus: f64,
    #[serde(default)]
    pub one_sided: bool,
}

impl TemperedStable {
    pub fn symmetric(alpha: f64, lambda: f64, scale: f64) -> Result<Self> {
        Self {
            alpha,
            lambda_plus: lambda,
            lambda_minus: lambda,
            scale_plus: scale,
            scale_minus: scale,
            one_sided: false,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidInput(format!(
                "tempered stable alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        let lambdas_ok = self.lambda_plus >= 0.0 && self.lambda_minus >= 0.0;
        let scales_ok = self.scale_plus > 0.0 && (self.one_sided || self.scale_minus > 0.0);
        if !(lambdas_ok && scales_ok) {
            return Err(Error::InvalidInput(
                "tempered stable needs lambda >= 0 and positive scales".into(),
            ));
        }
        Ok(self)
    }

    fn side(&self, u: f64) -> Option<(f64, f64, f64)> {
        // (scale, lambda, |u|)
        if u > 0.0 {
            Some((self.scale_plus, self.lambda_plus, u))
        } else if u < 0.0 && !self.one_sided {
            Some((self.scale_minus, self.lambda_minus, -u))
        } else {
            None
        }
    }
}

impl LevyDensity for TemperedStable {
    fn sigma(&self, u: f64) -> f64 {
        match self.side(u) {
            Some((s, l, w)) => s * (-l * w).exp() * w.powf(-1.0 - self.alpha),
            None => 0.0,
        }
    }

    fn sigma_d1(&self, u: f64) -> f64 {
        self.sigma(u) * self.log_sigma_d1(u)
    }

    fn sigma_d2(&self, u: f64) -> f64 {
        match self.side(u) {
            Some((_, l, w)) => {
                let g = l + (1.0 + self.alpha) / w;
                self.sigma(u) * (g * g + (1.0 + self.alpha) / (w * w))
            }
            None => 0.0,
        }
    }

    fn log_sigma_d1(&self, u: f64) -> f64 {
        match self.side(u) {
            Some((_, l, w)) => -(l + (1.0 + self.alpha) / w) * u.signum(),
            None => 0.0,
        }
    }

    fn log_sigma_d2(&self, u: f64) -> f64 {
        match self.side(u) {
            Some(_) => (1.0 + self.alpha) / (u * u),
            None => 0.0,
        }
    }

    fn tail_moment_order(&self) -> f64 {
        if self.lambda_plus > 0.0 && (self.one_sided || self.lambda_minus > 0.0) {
            // Exponential tempering: every moment exists.
            f64::INFINITY
        } else {
            (self.alpha - 2.0).max(0.0)
        }
    }

    fn has_side(&self, positive: bool) -> bool {
        positive || !self.one_sided
    }

    fn sample_side(&self, positive: bool, eps: f64, rng: &mut dyn RngCore) -> f64 {
        let lambda = if positive { self.lambda_plus } else { self.lambda_minus };
        // Pareto proposal eps·U^{-1/α}, accepted with probability e^{-λ(w-ε)}.
        loop {
            let v: f64 = 1.0 - rng.random::<f64>();
            let w = eps * v.powf(-1.0 / self.alpha);
            if lambda == 0.0 || rng.random::<f64>() < (-lambda * (w - eps)).exp() {
                return w;
            }
        }
    }
}

/// Finite-activity reference: Gaussian amplitudes at rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCompoundPoisson {
    pub rate: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl LevyDensity for GaussianCompoundPoisson {
    fn sigma(&self, u: f64) -> f64 {
        let z = (u - self.mean) / self.std_dev;
        self.rate * (-0.5 * z * z).exp() / (self.std_dev * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn sigma_d1(&self, u: f64) -> f64 {
        self.sigma(u) * self.log_sigma_d1(u)
    }

    fn sigma_d2(&self, u: f64) -> f64 {
        let g = self.log_sigma_d1(u);
        self.sigma(u) * (g * g + self.log_sigma_d2(u))
    }

    fn log_sigma_d1(&self, u: f64) -> f64 {
        -(u - self.mean) / (self.std_dev * self.std_dev)
    }

    fn log_sigma_d2(&self, _u: f64) -> f64 {
        -1.0 / (self.std_dev * self.std_dev)
    }

    fn tail_moment_order(&self) -> f64 {
        f64::INFINITY
    }

    fn sample_side(&self, positive: bool, eps: f64, rng: &mut dyn RngCore) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let u = self.mean + self.std_dev * z;
            if (u > eps && positive) || (u < -eps && !positive) {
                return u.abs();
            }
        }
    }
}

/// Expected number of perturbable jumps per path used to pick the default
/// truncation level.
///
/// Twenty already makes degenerate paths negligible (`e^{-20}`), but the
/// hard cut at `±ε` is a discontinuity of the truncated density that the
/// amplitude flow moves mass across. The resulting bias of the weights scales
/// like `σ(ε)ρ(ε)ε ~ ε^{3/2}` for stable-like densities and is visible at
/// `10⁵` paths unless `ε` is much smaller than the twenty-jump level.
pub const DEFAULT_MIN_PERTURBED_MASS: f64 = 150.0;

/// A jump of the driving Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub tau: f64,
    pub u: f64,
}

/// The driving Lévy process: density, outer cutoff `u₀` and triplet drift.
#[derive(Debug, Clone)]
pub struct LevyModel {
    pub density: Arc<dyn LevyDensity>,
    pub u0: f64,
    pub z_drift: f64,
}

/// Deterministic integrals against `μ` shared by every path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatorIntegrals {
    pub eps_trunc: f64,
    /// `∫_{ε<|u|<u₀} χ dμ`
    pub chi_integral: f64,
    /// `∫_{ε<|u|≤1} u dμ`
    pub small_jump_mean: f64,
    /// `μ({|u| > ε})`
    pub intensity: f64,
    /// `μ({ε < |u| < u₀})`, the mass of jumps the perturbation moves
    pub perturbed_mass: f64,
    /// `∫_{|u|≤ε} u² dμ`, variance per unit time of the discarded jumps
    pub truncation_variance: f64,
    /// largest relative error estimate among the quadratures above
    pub max_rel_error: f64,
}

impl LevyModel {
    pub fn new(density: Arc<dyn LevyDensity>, u0: f64, z_drift: f64) -> Result<Self> {
        if !(u0 > 0.0 && u0.is_finite() && z_drift.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need u0 > 0 and finite drift, got u0 = {u0}, drift = {z_drift}"
            )));
        }
        Ok(Self { density, u0, z_drift })
    }

    pub fn sigma(&self, u: f64) -> f64 {
        self.density.sigma(u)
    }

    /// `∫_{a<|u|<b} g(u) μ(du)` over both sides, `b` may be infinite.
    pub fn integrate_measure<G: Fn(f64) -> f64>(&self, g: G, a: f64, b: f64) -> Result<Integral> {
        let mut total = Integral { value: 0.0, error: 0.0 };
        for positive in [true, false] {
            if !self.density.has_side(positive) {
                continue;
            }
            let r = self.integrate_side(&g, positive, a, b)?;
            total.value += r.value;
            total.error += r.error;
        }
        Ok(total)
    }

    /// One side of [`Self::integrate_measure`]; `g` receives the signed amplitude.
    pub fn integrate_side<G: Fn(f64) -> f64>(&self, g: &G, positive: bool, a: f64, b: f64) -> Result<Integral> {
        let sign = if positive { 1.0 } else { -1.0 };
        let f = |w: f64| {
            let u = sign * w;
            g(u) * self.density.sigma(u)
        };
        let opts = QuadratureOptions::default();
        if a >= b {
            return Ok(Integral { value: 0.0, error: 0.0 });
        }
        let near = |lo: f64, hi: f64| {
            if lo > 0.0 {
                integrate_log(f, lo, hi, opts)
            } else {
                integrate(f, lo, hi, opts)
            }
        };
        if b.is_finite() {
            near(a, b)
        } else {
            let split = a.max(1.0);
            let head = if split > a {
                near(a, split)?
            } else {
                Integral { value: 0.0, error: 0.0 }
            };
            let tail = integrate_to_infinity(f, split, opts)?;
            Ok(Integral {
                value: head.value + tail.value,
                error: head.error + tail.error,
            })
        }
    }

    /// `μ({|u| > eps})` restricted to one side.
    pub fn side_mass(&self, positive: bool, eps: f64) -> Result<f64> {
        if !self.density.has_side(positive) {
            return Ok(0.0);
        }
        Ok(self.integrate_side(&|_| 1.0, positive, eps, f64::INFINITY)?.value)
    }

    /// Compensator integrals for truncation level `eps`.
    pub fn compensator_integrals(&self, spec: &PerturbationSpec, eps: f64) -> Result<CompensatorIntegrals> {
        if !(eps > 0.0 && eps < spec.u1) {
            return Err(Error::InvalidInput(format!(
                "truncation level must satisfy 0 < eps < u1 = {}, got {eps}",
                spec.u1
            )));
        }
        let mut rel = 0.0f64;
        // Relative error against Σ|side|, so integrals that cancel across
        // the two sides are judged on the size of their parts.
        let mut measure = |g: &dyn Fn(f64) -> f64, a: f64, b: f64| -> Result<f64> {
            let mut value = 0.0;
            let mut scale = 0.0;
            let mut error = 0.0;
            for positive in [true, false] {
                if !self.density.has_side(positive) {
                    continue;
                }
                let r = self.integrate_side(&g, positive, a, b)?;
                value += r.value;
                scale += r.value.abs();
                error += r.error;
            }
            if scale > 0.0 {
                rel = rel.max(error / scale);
            }
            Ok(value)
        };
        let chi_integral = measure(&|u| spec.chi(u, self.density.as_ref()).unwrap_or(0.0), eps, spec.u0)?;
        let small_jump_mean = measure(&|u| u, eps, 1.0)?;
        let intensity = measure(&|_| 1.0, eps, f64::INFINITY)?;
        let perturbed_mass = measure(&|_| 1.0, eps, spec.u0)?;
        let truncation_variance = measure(&|u| u * u, 0.0, eps)?;
        if !intensity.is_finite() || !truncation_variance.is_finite() {
            return Err(Error::NonIntegrable(format!(
                "mu(|u| > {eps}) = {intensity}, small-jump variance = {truncation_variance}"
            )));
        }
        Ok(CompensatorIntegrals {
            eps_trunc: eps,
            chi_integral,
            small_jump_mean,
            intensity,
            perturbed_mass,
            truncation_variance,
            max_rel_error: rel,
        })
    }

    /// Largest truncation level with `horizon · μ({ε < |u| < u₀}) ≥ min_mass`,
    /// see [`DEFAULT_MIN_PERTURBED_MASS`] for the usual target;
    /// which keeps the probability of a path without perturbable jumps below
    /// `e^{-min_mass}`.
    pub fn default_truncation(&self, spec: &PerturbationSpec, horizon: f64, min_mass: f64) -> Result<f64> {
        let target = min_mass / horizon;
        let mass = |eps: f64| -> Result<f64> { Ok(self.integrate_measure(|_| 1.0, eps, spec.u0)?.value) };
        // The level never exceeds u1/2 so that every sampled small jump lies
        // where ρ(u) = u².
        let mut hi = 0.5 * spec.u1;
        if mass(hi)? >= target {
            return Ok(hi);
        }
        let mut lo = hi;
        loop {
            lo *= 0.1;
            if lo < 1e-12 {
                return Err(Error::NonIntegrable(format!(
                    "mu(eps < |u| < u0) stays below {target} for eps down to 1e-12"
                )));
            }
            if mass(lo)? >= target {
                break;
            }
            hi = lo;
        }
        // Bisection in log-space, keeping mass(lo) ≥ target.
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if mass(mid)? >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    pub fn truncated(&self, eps: f64) -> Result<TruncatedLevy> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("truncation level {eps}")));
        }
        let mass_plus = self.side_mass(true, eps)?;
        let mass_minus = self.side_mass(false, eps)?;
        Ok(TruncatedLevy {
            model: self.clone(),
            eps,
            mass_plus,
            mass_minus,
        })
    }
}

/// The jump part restricted to `|u| > ε`, ready for exact sampling.
#[derive(Debug, Clone)]
pub struct TruncatedLevy {
    pub model: LevyModel,
    pub eps: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
}

impl TruncatedLevy {
    pub fn intensity(&self) -> f64 {
        self.mass_plus + self.mass_minus
    }

    /// Jumps on `[0, horizon]`: exponential gaps at the total intensity,
    /// side chosen by mass, amplitude from the side sampler.
    pub fn sample_jumps<R: RngCore>(&self, horizon: f64, rng: &mut R) -> Vec<JumpRecord> {
        let total = self.intensity();
        let mut jumps = Vec::new();
        if total <= 0.0 || horizon <= 0.0 {
            return jumps;
        }
        let gaps = Exp::new(total).expect("positive intensity");
        let p_plus = self.mass_plus / total;
        let mut t = 0.0;
        loop {
            t += gaps.sample(rng);
            if t > horizon {
                break;
            }
            let positive = rng.random::<f64>() < p_plus;
            let w = self.model.density.sample_side(positive, self.eps, rng);
            jumps.push(JumpRecord {
                tau: t,
                u: if positive { w } else { -w },
            });
        }
        jumps
    }
}
