//! Integration-by-parts weights assembled from a terminal variation stack.

use serde::{Deserialize, Serialize};

use crate::variation::VariationState;

/// Below this `DX` the path is treated as degenerate.
pub const DX_FLOOR: f64 = 1e-12;

/// `Ξ = δ(1/DX)`, `Ξ¹ = δ(∂_θX/DX)`, `δ(Ξ/DX)` and `δ(1)` for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub xi: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub delta1: f64,
    pub valid: bool,
}

impl WeightSet {
    pub fn from_state(s: &VariationState) -> Self {
        match (weight_xi(s), weight_xi1(s), weight_xi2(s)) {
            (Some(xi), Some(xi1), Some(xi2)) if xi.is_finite() && xi1.is_finite() && xi2.is_finite() => Self {
                xi,
                xi1,
                xi2,
                delta1: s.delta1,
                valid: true,
            },
            _ => Self {
                xi: 0.0,
                xi1: 0.0,
                xi2: 0.0,
                delta1: s.delta1,
                valid: false,
            },
        }
    }

    /// Only `Ξ`, for stacks from [`crate::variation::Simulator::density_state`];
    /// `xi1` and `xi2` are NaN.
    pub fn density_only(s: &VariationState) -> Self {
        match weight_xi(s) {
            Some(xi) if xi.is_finite() => Self {
                xi,
                xi1: f64::NAN,
                xi2: f64::NAN,
                delta1: s.delta1,
                valid: true,
            },
            _ => Self {
                xi: 0.0,
                xi1: f64::NAN,
                xi2: f64::NAN,
                delta1: s.delta1,
                valid: false,
            },
        }
    }
}

fn usable(s: &VariationState) -> bool {
    s.dx > DX_FLOOR
}

/// `δ(1)/DX + D²X/DX²`, or `None` on a degenerate path.
pub fn weight_xi(s: &VariationState) -> Option<f64> {
    usable(s).then(|| s.delta1 / s.dx + s.d2x / (s.dx * s.dx))
}

/// `δ(1)/(DX+ε) + D²X/(DX+ε)²`, defined on every path.
pub fn weight_xi_regularized(s: &VariationState, eps: f64) -> f64 {
    let v = s.dx + eps;
    s.delta1 / v + s.d2x / (v * v)
}

/// `∂_θX δ(1)/DX + ∂_θX D²X/DX² − D(∂_θX)/DX`.
pub fn weight_xi1(s: &VariationState) -> Option<f64> {
    usable(s).then(|| {
        let v = s.dx;
        s.dtheta_x * s.delta1 / v + s.dtheta_x * s.d2x / (v * v) - s.d_dtheta_x / v
    })
}

/// `((δ(1))² − Dδ(1))/DX² + (3δ(1)D²X − D³X)/DX³ + 3(D²X)²/DX⁴`.
pub fn weight_xi2(s: &VariationState) -> Option<f64> {
    usable(s).then(|| {
        let v = s.dx;
        let v2 = v * v;
        (s.delta1 * s.delta1 - s.d_delta1) / v2
            + (3.0 * s.delta1 * s.d2x - s.d3x) / (v2 * v)
            + 3.0 * s.d2x * s.d2x / (v2 * v2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(dx: f64, d2x: f64, d3x: f64, delta1: f64, d_delta1: f64) -> VariationState {
        VariationState {
            x: 0.0,
            cal_e: 1.0,
            dx,
            d2x,
            d3x,
            dtheta_x: 0.0,
            d_dtheta_x: 0.0,
            delta1,
            d_delta1,
        }
    }

    #[test]
    fn plug_in_values() {
        let s = state(0.5, 0.0, 0.0, 2.0, 3.0);
        assert_eq!(weight_xi(&s), Some(4.0));
        assert_eq!(weight_xi2(&s), Some((4.0 - 3.0) / 0.25));
        assert_eq!(weight_xi1(&s), Some(0.0));
    }

    #[test]
    fn degenerate_path_is_flagged() {
        let s = state(0.0, 0.0, 0.0, -1.5, 0.0);
        assert_eq!(weight_xi(&s), None);
        let w = WeightSet::from_state(&s);
        assert!(!w.valid);
        assert_eq!(w.delta1, -1.5);
        assert_eq!(weight_xi_regularized(&s, 0.25), -6.0);
    }

    #[test]
    fn regularization_limits() {
        let s = state(0.3, 0.1, 0.0, 0.7, 0.0);
        assert_eq!(weight_xi_regularized(&s, 0.0), weight_xi(&s).unwrap());
        assert!(weight_xi_regularized(&s, 1e12).abs() < 1e-11);
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let gap = (weight_xi_regularized(&s, eps) - weight_xi(&s).unwrap()).abs();
            assert!(gap < last);
            last = gap;
        }
    }

    proptest! {
        // δ(G) = δ(1)G − DG with G = 1/DX and D(1/DX) = −D²X/DX².
        #[test]
        fn xi_is_product_rule(dx in 1e-3f64..10.0, d2x in -5.0f64..5.0, delta1 in -5.0f64..5.0) {
            let s = state(dx, d2x, 0.0, delta1, 0.0);
            let g = 1.0 / dx;
            let dg = -d2x / (dx * dx);
            let xi = weight_xi(&s).unwrap();
            prop_assert!((xi - (delta1 * g - dg)).abs() <= 1e-12 * xi.abs().max(1.0));
        }

        // δ(G/DX) with G = 1/DX: D(1/DX²) = −2D²X/DX³, D(δ(1)/DX) =
        // (Dδ(1)DX − δ(1)D²X)/DX², applied to Ξ = δ(1)/DX + D²X/DX².
        #[test]
        fn xi2_is_divergence_of_xi_over_dx(
            dx in 1e-2f64..10.0, d2x in -5.0f64..5.0, d3x in -5.0f64..5.0,
            delta1 in -5.0f64..5.0, d_delta1 in -5.0f64..5.0,
        ) {
            let s = state(dx, d2x, d3x, delta1, d_delta1);
            let xi = weight_xi(&s).unwrap();
            let g = xi / dx;
            let d_xi = (d_delta1 * dx - delta1 * d2x) / (dx * dx)
                + (d3x * dx * dx - 2.0 * dx * d2x * d2x) / dx.powi(4);
            let dg = (d_xi * dx - xi * d2x) / (dx * dx);
            let expect = delta1 * g - dg;
            let got = weight_xi2(&s).unwrap();
            prop_assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }
}
