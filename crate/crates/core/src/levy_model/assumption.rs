//! Numerical checks of the four regularity conditions on the Lévy measure.

use serde::{Deserialize, Serialize};

use super::LevyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: String,
    pub passed: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseResult>,
    /// Fitted constant of the derivative bounds, when finite.
    pub c0: Option<f64>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Sup of `max(|σ'||u|/σ, |σ''|u²/σ)` over `[lo, u₀]` on both sides.
fn derivative_ratio(model: &LevyModel, lo: f64) -> f64 {
    let d = model.density.as_ref();
    let mut worst = 0.0f64;
    for w in log_grid(lo, model.u0, 200) {
        for u in [w, -w] {
            let s = d.sigma(u);
            if s == 0.0 && !d.has_side(u > 0.0) {
                continue;
            }
            let r1 = d.sigma_d1(u).abs() * w / s;
            let r2 = d.sigma_d2(u).abs() * w * w / s;
            if !(r1.is_finite() && r2.is_finite()) {
                return f64::INFINITY;
            }
            worst = worst.max(r1).max(r2);
        }
    }
    worst
}

pub fn check_assumption_h(model: &LevyModel) -> AssumptionReport {
    let d = model.density.as_ref();
    let mut clauses = Vec::new();

    // (i) moment of order 2 + κ on |u| ≥ 1
    let kappa = d.tail_moment_order();
    let order = 2.0 + if kappa.is_finite() { kappa } else { 1.0 };
    let moment = model.integrate_measure(|u: f64| u.abs().powf(order), 1.0, f64::INFINITY);
    clauses.push(match moment {
        Ok(r) if kappa > 0.0 && r.value.is_finite() => ClauseResult {
            clause: "i".into(),
            passed: true,
            evidence: format!("int_{{|u|>=1}} |u|^{order} dmu = {:.6e}", r.value),
        },
        Ok(r) => ClauseResult {
            clause: "i".into(),
            passed: false,
            evidence: format!("moment order kappa = {kappa}, integral {:e}", r.value),
        },
        Err(e) => ClauseResult {
            clause: "i".into(),
            passed: false,
            evidence: format!("moment integral of order {order} diverges: {e}"),
        },
    });

    // (ii) positive finite density on the punctured neighbourhood
    let grid = log_grid(1e-6 * model.u0, model.u0, 300);
    let mut bad = None;
    for &w in &grid {
        for u in [w, -w] {
            let s = d.sigma(u);
            if !(s > 0.0 && s.is_finite()) {
                bad.get_or_insert((u, s));
            }
        }
    }
    clauses.push(ClauseResult {
        clause: "ii".into(),
        passed: bad.is_none(),
        evidence: match bad {
            None => format!("sigma > 0 at {} grid points in [1e-6 u0, u0]", 2 * grid.len()),
            Some((u, s)) => format!("sigma({u:e}) = {s:e}"),
        },
    });

    // (iii) |σ'| ≤ C₀|u|⁻¹σ and |σ''| ≤ C₀u⁻²σ; a bounded C₀ must not keep
    // growing as the grid reaches toward the origin.
    let coarse = derivative_ratio(model, 1e-3 * model.u0);
    let fine = derivative_ratio(model, 1e-6 * model.u0);
    let stable = fine.is_finite() && fine <= 1.5 * coarse + 1e-12;
    clauses.push(ClauseResult {
        clause: "iii".into(),
        passed: stable,
        evidence: format!("fitted C0 on [1e-3 u0, u0] = {coarse:.4e}, on [1e-6 u0, u0] = {fine:.4e}"),
    });

    // (iv) μ(|u| ≥ ε) / log(1/ε) → ∞: the mass gained per decade of ε must
    // keep increasing (logarithmic growth gives constant increments).
    let levels = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let masses: Vec<f64> = levels
        .iter()
        .map(|&e| {
            model
                .integrate_measure(|_| 1.0, e, f64::INFINITY)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let ratios: Vec<f64> = levels.iter().zip(&masses).map(|(e, m)| m / (1.0 / e).ln()).collect();
    let increments: Vec<f64> = masses.windows(2).map(|w| w[1] - w[0]).collect();
    let growing = increments.iter().all(|x| x.is_finite())
        && increments.windows(2).all(|w| w[1] > w[0])
        && ratios.windows(2).all(|w| w[1] > w[0]);
    clauses.push(ClauseResult {
        clause: "iv".into(),
        passed: growing,
        evidence: format!("mu(|u|>=eps)/log(1/eps) at eps=1e-2..1e-6: {ratios:?}"),
    });

    AssumptionReport {
        clauses,
        c0: fine.is_finite().then_some(fine),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{GaussianCompoundPoisson, LevyDensity, TemperedStable};
    use rand::RngCore;
    use std::sync::Arc;

    #[test]
    fn tempered_stable_satisfies_all_clauses() {
        for alpha in [0.3, 0.5, 0.9] {
            let ts = TemperedStable::symmetric(alpha, 1.0, 1.0).unwrap();
            let m = LevyModel::new(Arc::new(ts), 1.0, 0.0).unwrap();
            let r = check_assumption_h(&m);
            assert!(r.all_passed(), "alpha={alpha}: {r:#?}");
            assert!(r.c0.unwrap() > 1.0);
        }
    }

    #[test]
    fn compound_poisson_fails_activity_clause() {
        let cp = GaussianCompoundPoisson {
            rate: 5.0,
            mean: 0.0,
            std_dev: 0.5,
        };
        let m = LevyModel::new(Arc::new(cp), 1.0, 0.0).unwrap();
        let r = check_assumption_h(&m);
        assert!(!r.clause("iv").unwrap().passed);
        assert!(r.clause("i").unwrap().passed);
        assert!(r.clause("iii").unwrap().passed);
    }

    #[derive(Debug)]
    struct Explosive;

    impl LevyDensity for Explosive {
        fn sigma(&self, u: f64) -> f64 {
            (1.0 / u.abs()).exp()
        }
        fn sigma_d1(&self, u: f64) -> f64 {
            -u.signum() / (u * u) * self.sigma(u)
        }
        fn sigma_d2(&self, u: f64) -> f64 {
            let w = u.abs();
            (1.0 / w.powi(4) + 2.0 / w.powi(3)) * self.sigma(u)
        }
        fn tail_moment_order(&self) -> f64 {
            1.0
        }
        fn sample_side(&self, _: bool, _: f64, _: &mut dyn RngCore) -> f64 {
            unimplemented!("only used by the assumption checker")
        }
    }

    #[test]
    fn fast_varying_density_fails_derivative_clause() {
        let m = LevyModel::new(Arc::new(Explosive), 1.0, 0.0).unwrap();
        let r = check_assumption_h(&m);
        assert!(!r.clause("iii").unwrap().passed, "{r:#?}");
    }

    #[test]
    fn one_sided_model_fails_positivity_clause() {
        let ts = TemperedStable {
            alpha: 0.5,
            lambda_plus: 1.0,
            lambda_minus: 1.0,
            scale_plus: 1.0,
            scale_minus: 0.0,
            one_sided: true,
        };
        let m = LevyModel::new(Arc::new(ts), 1.0, 0.0).unwrap();
        let r = check_assumption_h(&m);
        assert!(!r.clause("ii").unwrap().passed);
        assert!(r.clause("iv").unwrap().passed);
    }
}
