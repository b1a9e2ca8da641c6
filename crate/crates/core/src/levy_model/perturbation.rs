//! The perturbation function `ρ`, its flow `Q_c` and the function `χ`.
//!
//! `ρ(u) = u²` on `|u| ≤ u₁`, `0` on `|u| ≥ u₀`, and in between a quintic
//! Hermite bridge matching value, slope and curvature at both ends. Written
//! in `s = (|u| - u₁)/(u₀ - u₁)` the bridge is `(1-s)³(A + Bs + Cs²)` with
//! `A, B, C > 0`, so it is nonnegative by construction.

use serde::{Deserialize, Serialize};

use super::LevyDensity;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureOptions};

/// RK4 step used for the flow inside the bridge region.
const FLOW_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub u0: f64,
    pub u1: f64,
    /// `(A, B, C)` of the bridge polynomial.
    pub bridge_coeffs: [f64; 3],
    /// Largest `|c|` accepted by the flow.
    pub max_shift: f64,
}

impl PerturbationSpec {
    pub fn new(u0: f64, u1: f64) -> Result<Self> {
        if !(u1 > 0.0 && u1 < u0 && u0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cutoffs must satisfy 0 < u1 < u0, got u1 = {u1}, u0 = {u0}"
            )));
        }
        let h = u0 - u1;
        let a = u1 * u1;
        let b = 3.0 * a + 2.0 * u1 * h;
        let c = h * h + 6.0 * a + 6.0 * u1 * h;
        Ok(Self {
            u0,
            u1,
            bridge_coeffs: [a, b, c],
            max_shift: 1.0,
        })
    }

    fn width(&self) -> f64 {
        self.u0 - self.u1
    }

    /// Bridge polynomial and its first three derivatives in `s`.
    fn bridge(&self, s: f64) -> [f64; 4] {
        let [a, b, c] = self.bridge_coeffs;
        let q = a + s * (b + s * c);
        let q1 = b + 2.0 * c * s;
        let q2 = 2.0 * c;
        let r = 1.0 - s;
        let (r2, r3) = (r * r, r * r * r);
        [
            r3 * q,
            -3.0 * r2 * q + r3 * q1,
            6.0 * r * q - 6.0 * r2 * q1 + r3 * q2,
            -6.0 * q + 18.0 * r * q1 - 9.0 * r2 * q2,
        ]
    }

    pub fn rho(&self, u: f64) -> f64 {
        let w = u.abs();
        if w <= self.u1 {
            w * w
        } else if w >= self.u0 {
            0.0
        } else {
            self.bridge((w - self.u1) / self.width())[0]
        }
    }

    pub fn rho_d1(&self, u: f64) -> f64 {
        let w = u.abs();
        if w <= self.u1 {
            2.0 * u
        } else if w >= self.u0 {
            0.0
        } else {
            u.signum() * self.bridge((w - self.u1) / self.width())[1] / self.width()
        }
    }

    pub fn rho_d2(&self, u: f64) -> f64 {
        let w = u.abs();
        if w <= self.u1 {
            2.0
        } else if w >= self.u0 {
            0.0
        } else {
            let h = self.width();
            self.bridge((w - self.u1) / h)[2] / (h * h)
        }
    }

    /// `χ = -(σρ)'/σ = -(σ'/σ)ρ - ρ'`; zero where `μ` has no mass.
    pub fn chi(&self, u: f64, density: &dyn LevyDensity) -> Result<f64> {
        if u == 0.0 {
            return Err(Error::SingularAmplitude);
        }
        if u.abs() >= self.u0 || density.sigma(u) == 0.0 {
            return Ok(0.0);
        }
        Ok(-density.log_sigma_d1(u) * self.rho(u) - self.rho_d1(u))
    }

    /// `χ' = -(log σ)''ρ - (log σ)'ρ' - ρ''`.
    pub fn chi_d1(&self, u: f64, density: &dyn LevyDensity) -> Result<f64> {
        if u == 0.0 {
            return Err(Error::SingularAmplitude);
        }
        if u.abs() >= self.u0 || density.sigma(u) == 0.0 {
            return Ok(0.0);
        }
        Ok(-density.log_sigma_d2(u) * self.rho(u) - density.log_sigma_d1(u) * self.rho_d1(u) - self.rho_d2(u))
    }

    fn check_shift(&self, c: f64) -> Result<()> {
        if c.is_finite() && c.abs() <= self.max_shift {
            Ok(())
        } else {
            Err(Error::FlowRange { c, max: self.max_shift })
        }
    }

    /// `Q_c(u)`: the solution at time `c` of `q' = ρ(q)`, `q(0) = u`.
    pub fn q_flow(&self, u: f64, c: f64) -> Result<f64> {
        Ok(self.q_flow_jacobian(u, c)?.0)
    }

    /// `(Q_c(u), ∂_u Q_c(u))`.
    ///
    /// For an autonomous scalar flow `∂_u Q_c(u) = ρ(Q_c(u))/ρ(u)` whenever
    /// `ρ(u) > 0`, which is what the Jacobian below uses.
    pub fn q_flow_jacobian(&self, u: f64, c: f64) -> Result<(f64, f64)> {
        self.check_shift(c)?;
        if u == 0.0 || c == 0.0 || u.abs() >= self.u0 {
            return Ok((u, 1.0));
        }
        // ρ is even, so Q_c(-w) = -Q_{-c}(w).
        let (w, shift, sign) = if u > 0.0 { (u, c, 1.0) } else { (-u, -c, -1.0) };
        let q = self.flow_positive(w, shift);
        let jac = self.rho(q) / self.rho(w);
        Ok((sign * q, jac))
    }

    fn flow_positive(&self, w: f64, c: f64) -> f64 {
        let u1 = self.u1;
        if w <= u1 {
            if c < 0.0 {
                // Moves toward the fixed point 0 and never leaves |q| ≤ u₁.
                return w / (1.0 - w * c);
            }
            let to_boundary = 1.0 / w - 1.0 / u1;
            if c <= to_boundary {
                return w / (1.0 - w * c);
            }
            return self.rk4(u1, c - to_boundary);
        }
        if c > 0.0 {
            // u₀ is a fixed point; the trajectory stays in the bridge.
            return self.rk4(w, c);
        }
        let to_boundary = self.time_in_bridge(w);
        if -c <= to_boundary {
            self.rk4(w, c)
        } else {
            let rest = -c - to_boundary;
            u1 / (1.0 + u1 * rest)
        }
    }

    /// Time for the flow to travel from `u₁` to `w` inside the bridge.
    fn time_in_bridge(&self, w: f64) -> f64 {
        integrate(
            |q| 1.0 / self.rho(q),
            self.u1,
            w,
            QuadratureOptions {
                abs_tol: 1e-15,
                rel_tol: 1e-13,
                max_intervals: 2000,
            },
        )
        .map(|r| r.value)
        .unwrap_or(f64::INFINITY)
    }

    fn rk4(&self, start: f64, c: f64) -> f64 {
        let n = ((c.abs() / FLOW_STEP).ceil() as usize).max(4);
        let h = c / n as f64;
        let mut q = start;
        for _ in 0..n {
            let k1 = self.rho(q);
            let k2 = self.rho(q + 0.5 * h * k1);
            let k3 = self.rho(q + 0.5 * h * k2);
            let k4 = self.rho(q + h * k3);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::TemperedStable;
    use proptest::prelude::*;

    fn spec() -> PerturbationSpec {
        PerturbationSpec::new(1.0, 0.5).unwrap()
    }

    fn ts() -> TemperedStable {
        TemperedStable::symmetric(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rho_piecewise_values() {
        let s = spec();
        assert_eq!(s.rho(0.0), 0.0);
        assert!((s.rho(0.3) - 0.09).abs() < 1e-15);
        assert_eq!(s.rho(2.0), 0.0);
        assert!((s.rho_d1(0.3) - 0.6).abs() < 1e-15);
        assert_eq!(s.rho_d2(0.3), 2.0);
        assert_eq!((s.rho_d1(1.5), s.rho_d2(1.5)), (0.0, 0.0));
    }

    #[test]
    fn bridge_midpoint_value() {
        // s = 1/2, h = 1/2: (1/8)(A + B/2 + C/4) with A = 1/4, B = 5/4, C = 13/4.
        let s = spec();
        assert_eq!(s.bridge_coeffs, [0.25, 1.25, 3.25]);
        let expect = 0.125 * (0.25 + 0.625 + 0.8125);
        assert!((s.rho(0.75) - expect).abs() < 1e-15);
    }

    #[test]
    fn rho_is_c2_at_the_cutoffs() {
        let s = spec();
        for &knot in &[s.u1, s.u0] {
            for (f, name) in [
                (&(|u| s.rho(u)) as &dyn Fn(f64) -> f64, "rho"),
                (&(|u| s.rho_d1(u)), "rho'"),
                (&(|u| s.rho_d2(u)), "rho''"),
            ] {
                let jump = (f(knot + 1e-9) - f(knot - 1e-9)).abs();
                assert!(jump < 1e-6, "{name} jumps by {jump} at {knot}");
            }
        }
    }

    #[test]
    fn rho_derivatives_match_finite_differences_in_bridge() {
        let s = spec();
        for k in 1..50 {
            let u = 0.5 + 0.5 * k as f64 / 50.0;
            let h = 1e-5;
            let fd1 = (s.rho(u + h) - s.rho(u - h)) / (2.0 * h);
            let fd2 = (s.rho_d1(u + h) - s.rho_d1(u - h)) / (2.0 * h);
            assert!((fd1 - s.rho_d1(u)).abs() < 1e-6);
            assert!((fd2 - s.rho_d2(u)).abs() < 1e-6);
            assert!((s.rho_d1(-u) + s.rho_d1(u)).abs() < 1e-15);
        }
    }

    #[test]
    fn chi_closed_form_small_u() {
        let s = spec();
        let c = s.chi(0.1, &ts()).unwrap();
        assert!((c - (0.01 - 0.05)).abs() < 1e-15, "{c}");
        assert_eq!(s.chi(1.2, &ts()).unwrap(), 0.0);
        assert!(matches!(s.chi(0.0, &ts()), Err(Error::SingularAmplitude)));
    }

    #[test]
    fn chi_matches_finite_difference_of_sigma_rho() {
        let s = spec();
        let d = ts();
        let sr = |u: f64| d.sigma(u) * s.rho(u);
        for k in 1..40 {
            for sign in [1.0, -1.0] {
                let u = sign * (0.02 + 0.95 * k as f64 / 40.0);
                let h = 1e-5 * u.abs();
                let fd = -(sr(u + h) - sr(u - h)) / (2.0 * h) / d.sigma(u);
                let chi = s.chi(u, &d).unwrap();
                assert!((fd - chi).abs() <= 1e-6 * (1.0 + chi.abs()), "u={u}: {fd} vs {chi}");
            }
        }
    }

    #[test]
    fn chi_d1_matches_finite_difference_and_closed_form() {
        let s = spec();
        let d = ts();
        for k in 1..40 {
            let u = 0.02 + 0.95 * k as f64 / 40.0;
            let h = 1e-6;
            let fd = (s.chi(u + h, &d).unwrap() - s.chi(u - h, &d).unwrap()) / (2.0 * h);
            let an = s.chi_d1(u, &d).unwrap();
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "u={u}");
        }
        // Small-u closed form from σ, σ', σ''.
        let u = 0.2;
        let (sg, s1, s2) = (d.sigma(u), d.sigma_d1(u), d.sigma_d2(u));
        let closed = -((s2 * sg - s1 * s1) / (sg * sg)) * u * u - (s1 / sg) * 2.0 * u - 2.0;
        assert!((closed - s.chi_d1(u, &d).unwrap()).abs() < 1e-12);
        assert_eq!(s.chi_d1(1.0, &d).unwrap(), 0.0);
    }

    #[test]
    fn chi_is_order_u_near_zero() {
        let s = spec();
        let d = ts();
        let ratios: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&u| s.chi(u, &d).unwrap().abs() / u)
            .collect();
        assert!(ratios.iter().all(|&r| r < 1.0), "{ratios:?}");
    }

    #[test]
    fn flow_closed_form_and_fixed_points() {
        let s = spec();
        assert_eq!(s.q_flow(0.0, 0.7).unwrap(), 0.0);
        assert!((s.q_flow(0.1, 1.0).unwrap() - 0.1 / 0.9).abs() < 1e-15);
        assert_eq!(s.q_flow(1.3, 0.9).unwrap(), 1.3);
        assert_eq!(s.q_flow(-1.0, -0.9).unwrap(), -1.0);
        assert!(matches!(s.q_flow(0.1, 2.0), Err(Error::FlowRange { .. })));
    }

    #[test]
    fn flow_derivative_in_c_is_rho() {
        let s = spec();
        for k in 0..30 {
            let u = -0.98 + 1.96 * k as f64 / 29.0;
            let h = 1e-5;
            let fd = (s.q_flow(u, h).unwrap() - s.q_flow(u, -h).unwrap()) / (2.0 * h);
            assert!((fd - s.rho(u)).abs() <= 1e-6 * s.rho(u).max(1e-12), "u={u}: {fd}");
        }
    }

    #[test]
    fn flow_jacobian_matches_finite_difference() {
        let s = spec();
        for &u in &[0.05, 0.3, 0.49, 0.6, 0.9, -0.2, -0.7] {
            for &c in &[0.8, 0.2, -0.5] {
                let (_, jac) = s.q_flow_jacobian(u, c).unwrap();
                let h = 1e-6;
                let fd = (s.q_flow(u + h, c).unwrap() - s.q_flow(u - h, c).unwrap()) / (2.0 * h);
                assert!((fd - jac).abs() < 1e-6 * jac, "u={u} c={c}: {fd} vs {jac}");
            }
        }
    }

    proptest! {
        #[test]
        fn flow_group_law(u in -1.2f64..1.2, c in -1.0f64..1.0, d in -0.5f64..0.5) {
            let s = spec();
            let back = s.q_flow(s.q_flow(u, c).unwrap(), -c).unwrap();
            prop_assert!((back - u).abs() <= 1e-9);
            if (c + d).abs() <= 1.0 {
                let two = s.q_flow(s.q_flow(u, d).unwrap(), c).unwrap();
                let one = s.q_flow(u, c + d).unwrap();
                prop_assert!((two - one).abs() <= 1e-9);
            }
        }

        #[test]
        fn rho_nonnegative(u in -3.0f64..3.0) {
            prop_assert!(spec().rho(u) >= 0.0);
        }
    }
}
