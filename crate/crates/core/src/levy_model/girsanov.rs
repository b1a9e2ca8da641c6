//! Density of the perturbed Poisson measure with respect to the original.
//!
//! Moving every amplitude with `τ ≤ T` through `Q_c` changes the intensity
//! on `[0,T]` by the factor `m_c(u) = σ(Q_{-c}(u)) ∂_u Q_{-c}(u) / σ(u)`.
//! For the truncated measure on `|u| > ε` the likelihood ratio is
//!
//! ```text
//! log κ_c = Σ_{τᵢ≤T} log m_c(uᵢ) − T∫ log m_c dμ + T∫ (1 − m_c + log m_c) dμ
//! ```
//!
//! with both integrals over `ε < |u| < u₀` (`m_c = 1` elsewhere). The two
//! `log m_c` integrals cancel, so only `T∫(1 − m_c) dμ` is computed.

use super::{JumpRecord, LevyModel, PerturbationSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GirsanovDensity {
    pub c: f64,
    pub horizon: f64,
    pub eps: f64,
    /// `T ∫_{ε<|u|<u₀} (1 − m_c) dμ`
    pub compensator: f64,
    model: LevyModel,
    spec: PerturbationSpec,
}

impl GirsanovDensity {
    pub fn new(model: &LevyModel, spec: &PerturbationSpec, c: f64, horizon: f64, eps: f64) -> Result<Self> {
        if c.abs() > spec.max_shift || !c.is_finite() {
            return Err(Error::FlowRange { c, max: spec.max_shift });
        }
        let mut this = Self {
            c,
            horizon,
            eps,
            compensator: 0.0,
            model: model.clone(),
            spec: *spec,
        };
        if c != 0.0 {
            let integral = model.integrate_measure(|u| 1.0 - this.m_c(u), eps, spec.u0)?;
            this.compensator = horizon * integral.value;
        }
        Ok(this)
    }

    /// Intensity ratio `m_c(u)`.
    pub fn m_c(&self, u: f64) -> f64 {
        if self.c == 0.0 || u.abs() >= self.spec.u0 {
            return 1.0;
        }
        let s = self.model.sigma(u);
        if s == 0.0 {
            return 1.0;
        }
        let (back, jac) = self
            .spec
            .q_flow_jacobian(u, -self.c)
            .expect("shift validated at construction");
        self.model.sigma(back) * jac / s
    }

    pub fn log_density(&self, jumps: &[JumpRecord]) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let sum: f64 = jumps
            .iter()
            .filter(|j| j.tau <= self.horizon && j.u.abs() < self.spec.u0)
            .map(|j| self.m_c(j.u).ln())
            .sum();
        sum + self.compensator
    }
}

/// `log κ_c` for one jump configuration.
pub fn girsanov_log_density(
    c: f64,
    horizon: f64,
    jumps: &[JumpRecord],
    model: &LevyModel,
    spec: &PerturbationSpec,
    eps: f64,
) -> Result<f64> {
    Ok(GirsanovDensity::new(model, spec, c, horizon, eps)?.log_density(jumps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::TemperedStable;
    use std::sync::Arc;

    fn fixture() -> (LevyModel, PerturbationSpec) {
        let ts = TemperedStable::symmetric(0.5, 1.0, 1.0).unwrap();
        (
            LevyModel::new(Arc::new(ts), 1.0, 0.0).unwrap(),
            PerturbationSpec::new(1.0, 0.5).unwrap(),
        )
    }

    #[test]
    fn identity_at_zero_shift() {
        let (m, s) = fixture();
        let jumps = [JumpRecord { tau: 0.3, u: 0.2 }, JumpRecord { tau: 0.5, u: -0.7 }];
        assert_eq!(girsanov_log_density(0.0, 1.0, &jumps, &m, &s, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn empty_configuration_is_pure_compensator() {
        let (m, s) = fixture();
        let g = GirsanovDensity::new(&m, &s, 0.05, 2.0, 0.01).unwrap();
        assert_eq!(g.log_density(&[]), g.compensator);
        // Jumps beyond u₀ or after T do not contribute.
        let outside = [JumpRecord { tau: 0.1, u: 1.5 }, JumpRecord { tau: 2.5, u: 0.2 }];
        assert_eq!(g.log_density(&outside), g.compensator);
    }

    #[test]
    fn compensator_matches_change_of_variables() {
        // ∫_A σ(Q_{-c}u) ∂Q_{-c}(u) du = μ(Q_{-c}(A)), so on each side the
        // compensator is the mass between ε and Q_{-c}(±ε).
        let (m, s) = fixture();
        let eps = 0.01;
        for &c in &[0.3, 0.01, -0.2] {
            let g = GirsanovDensity::new(&m, &s, c, 1.0, eps).unwrap();
            let mut expect = 0.0;
            for sign in [1.0, -1.0] {
                let moved = s.q_flow(sign * eps, -c).unwrap().abs();
                let (lo, hi, orient) = if moved < eps {
                    (moved, eps, -1.0)
                } else {
                    (eps, moved, 1.0)
                };
                let mass = m.integrate_side(&|_| 1.0, sign > 0.0, lo, hi).unwrap().value;
                expect += orient * mass;
            }
            assert!(
                (g.compensator - expect).abs() < 1e-9,
                "c={c}: {} vs {expect}",
                g.compensator
            );
        }
    }

    #[test]
    fn difference_quotient_converges_to_chi() {
        let (m, s) = fixture();
        let eps = 0.01;
        let mut errs = Vec::new();
        for &c in &[1e-2, 1e-3, 1e-4] {
            let g = GirsanovDensity::new(&m, &s, c, 1.0, eps).unwrap();
            let err = m
                .integrate_measure(
                    |u| {
                        let d = (g.m_c(u) - 1.0) / c - s.chi(u, m.density.as_ref()).unwrap();
                        d * d
                    },
                    eps,
                    s.u0,
                )
                .unwrap()
                .value;
            errs.push(err);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 1e-6, "{errs:?}");
    }
}
