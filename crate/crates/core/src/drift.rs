//! Parametric drifts `a(θ, x)` with the derivatives the variation ODEs need.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `a` and its partial derivatives at one `(θ, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftDerivatives {
    pub a: f64,
    pub a_x: f64,
    pub a_xx: f64,
    pub a_xxx: f64,
    pub a_theta: f64,
    pub a_x_theta: f64,
}

pub trait DriftModel: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn eval(&self, theta: f64, x: f64) -> DriftDerivatives;

    /// Only `a(θ, x)`; plain path simulation calls this.
    fn value(&self, theta: f64, x: f64) -> f64 {
        self.eval(theta, x).a
    }

    /// Open parameter interval Θ.
    fn parameter_interval(&self) -> (f64, f64);

    fn check_parameter(&self, theta: f64) -> Result<()> {
        let (lo, hi) = self.parameter_interval();
        if theta > lo && theta < hi {
            Ok(())
        } else {
            Err(Error::ParameterRange { theta, lo, hi })
        }
    }
}

/// `a = -θx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDrift {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DriftModel for LinearDrift {
    fn name(&self) -> &str {
        "linear"
    }

    fn eval(&self, theta: f64, x: f64) -> DriftDerivatives {
        DriftDerivatives {
            a: -theta * x,
            a_x: -theta,
            a_xx: 0.0,
            a_xxx: 0.0,
            a_theta: -x,
            a_x_theta: -1.0,
        }
    }

    fn value(&self, theta: f64, x: f64) -> f64 {
        -theta * x
    }

    fn parameter_interval(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
}

/// `a = -θ tanh x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhDrift {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DriftModel for TanhDrift {
    fn name(&self) -> &str {
        "tanh"
    }

    fn eval(&self, theta: f64, x: f64) -> DriftDerivatives {
        let t = x.tanh();
        let sech2 = 1.0 - t * t;
        DriftDerivatives {
            a: -theta * t,
            a_x: -theta * sech2,
            a_xx: 2.0 * theta * sech2 * t,
            a_xxx: 2.0 * theta * sech2 * (1.0 - 3.0 * t * t),
            a_theta: -t,
            a_x_theta: -sech2,
        }
    }

    fn value(&self, theta: f64, x: f64) -> f64 {
        -theta * x.tanh()
    }

    fn parameter_interval(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
}

/// `a = -θx + b sin x`, a nonlinear drift with unbounded `a_θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSineDrift {
    pub amplitude: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DriftModel for LinearSineDrift {
    fn name(&self) -> &str {
        "linear_sine"
    }

    fn eval(&self, theta: f64, x: f64) -> DriftDerivatives {
        let (s, c) = x.sin_cos();
        let b = self.amplitude;
        DriftDerivatives {
            a: -theta * x + b * s,
            a_x: -theta + b * c,
            a_xx: -b * s,
            a_xxx: -b * c,
            a_theta: -x,
            a_x_theta: -1.0,
        }
    }

    fn parameter_interval(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
}

/// `a = -κx`, independent of θ. The parameter is unidentifiable; useful to
/// check that every θ-sensitivity vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatDrift {
    pub rate: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DriftModel for FlatDrift {
    fn name(&self) -> &str {
        "flat"
    }

    fn eval(&self, _theta: f64, x: f64) -> DriftDerivatives {
        DriftDerivatives {
            a: -self.rate * x,
            a_x: -self.rate,
            ..Default::default()
        }
    }

    fn parameter_interval(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Largest relative mismatch between supplied derivatives and central
    /// differences of their parents.
    pub max_fd_mismatch: f64,
    pub fd_consistent: bool,
    pub sup_a_x: f64,
    pub sup_a_xx: f64,
    pub sup_a_xxx: f64,
    pub sup_a_x_theta: f64,
    /// Fitted `C` of `|a| + |a_θ| ≤ C(1 + |x|)` on the grid.
    pub linear_growth_c: f64,
}

/// Grid checks on `Θ × [-radius, radius]`.
pub fn check_drift(drift: &dyn DriftModel, radius: f64) -> DriftReport {
    let (lo, hi) = drift.parameter_interval();
    let thetas: Vec<f64> = (1..=5).map(|i| lo + (hi - lo) * i as f64 / 6.0).collect();
    let xs: Vec<f64> = (0..=40).map(|i| -radius + 2.0 * radius * i as f64 / 40.0).collect();
    let mut mismatch = 0.0f64;
    let mut report = DriftReport {
        max_fd_mismatch: 0.0,
        fd_consistent: true,
        sup_a_x: 0.0,
        sup_a_xx: 0.0,
        sup_a_xxx: 0.0,
        sup_a_x_theta: 0.0,
        linear_growth_c: 0.0,
    };
    let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
    for &th in &thetas {
        for &x in &xs {
            let d = drift.eval(th, x);
            let h = 1e-5;
            let px = drift.eval(th, x + h);
            let mx = drift.eval(th, x - h);
            let pt = drift.eval(th + h, x);
            let mt = drift.eval(th - h, x);
            mismatch = mismatch
                .max(rel((px.a - mx.a) / (2.0 * h), d.a_x))
                .max(rel((px.a_x - mx.a_x) / (2.0 * h), d.a_xx))
                .max(rel((px.a_xx - mx.a_xx) / (2.0 * h), d.a_xxx))
                .max(rel((pt.a - mt.a) / (2.0 * h), d.a_theta))
                .max(rel((pt.a_x - mt.a_x) / (2.0 * h), d.a_x_theta));
            report.sup_a_x = report.sup_a_x.max(d.a_x.abs());
            report.sup_a_xx = report.sup_a_xx.max(d.a_xx.abs());
            report.sup_a_xxx = report.sup_a_xxx.max(d.a_xxx.abs());
            report.sup_a_x_theta = report.sup_a_x_theta.max(d.a_x_theta.abs());
            report.linear_growth_c = report
                .linear_growth_c
                .max((d.a.abs() + d.a_theta.abs()) / (1.0 + x.abs()));
        }
    }
    report.max_fd_mismatch = mismatch;
    report.fd_consistent = mismatch < 1e-5;
    report
}
