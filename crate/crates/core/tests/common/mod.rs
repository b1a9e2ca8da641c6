#![allow(dead_code)]

use std::sync::Arc;

use levy_malliavin::drift::{DriftModel, LinearDrift, LinearSineDrift, TanhDrift};
use levy_malliavin::levy_model::{
    GaussianCompoundPoisson, LevyModel, PerturbationSpec, TemperedStable, DEFAULT_MIN_PERTURBED_MASS,
};
use levy_malliavin::variation::Simulator;

pub const U0: f64 = 1.0;
pub const U1: f64 = 0.5;

pub fn tempered_stable() -> LevyModel {
    let ts = TemperedStable::symmetric(0.5, 1.0, 1.0).unwrap();
    LevyModel::new(Arc::new(ts), U0, 0.0).unwrap()
}

pub fn gaussian_cp() -> LevyModel {
    let g = GaussianCompoundPoisson {
        rate: 40.0,
        mean: 0.0,
        std_dev: 0.4,
    };
    LevyModel::new(Arc::new(g), U0, 0.1).unwrap()
}

pub fn linear() -> Arc<dyn DriftModel> {
    Arc::new(LinearDrift {
        theta_min: 0.1,
        theta_max: 3.0,
    })
}

pub fn drifts() -> Vec<(&'static str, Arc<dyn DriftModel>)> {
    vec![
        ("linear", linear()),
        (
            "tanh",
            Arc::new(TanhDrift {
                theta_min: 0.1,
                theta_max: 3.0,
            }),
        ),
        (
            "linear_sine",
            Arc::new(LinearSineDrift {
                amplitude: 0.3,
                theta_min: 0.1,
                theta_max: 3.0,
            }),
        ),
    ]
}

/// Simulator with the default truncation for `horizon`; the compound
/// Poisson model has finite mass and gets a fixed small level instead.
pub fn simulator(model: LevyModel, drift: Arc<dyn DriftModel>, horizon: f64, max_dt: f64) -> Simulator {
    let spec = PerturbationSpec::new(U0, U1).unwrap();
    let eps = model
        .default_truncation(&spec, horizon, DEFAULT_MIN_PERTURBED_MASS)
        .unwrap_or(1e-4);
    Simulator::new(model, spec, drift, eps, max_dt).unwrap()
}

/// The OU fixture: linear drift, tempered-stable noise.
pub fn ou(horizon: f64, max_dt: f64) -> Simulator {
    simulator(tempered_stable(), linear(), horizon, max_dt)
}
