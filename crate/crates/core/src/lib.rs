//! Monte Carlo transition densities, scores and Fisher information for
//! pure-jump Lévy-driven SDEs `dX_t = a_θ(X_t) dt + dZ_t`, built on
//! integration by parts with respect to perturbations of the jump amplitudes.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod levy_model;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod variation;
pub mod weights;

pub use error::{Error, Result};
