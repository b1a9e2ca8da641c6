//! Property tests for deterministic invariants.

mod common;

use levy_malliavin::inference::ObservationSet;
use levy_malliavin::levy_model::JumpRecord;
use levy_malliavin::rng::StreamSeed;
use levy_malliavin::stats::{compensated_sum, MeanAccumulator};
use levy_malliavin::variation::default_step;
use proptest::prelude::*;
use rand::RngCore;

fn jump_list() -> impl Strategy<Value = Vec<JumpRecord>> {
    prop::collection::vec((0.0f64..1.0, -1.5f64..1.5), 0..40).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.into_iter().map(|(tau, u)| JumpRecord { tau, u }).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduced_solver_matches_full_stack(jumps in jump_list(), x0 in -2.0f64..2.0, theta in 0.2f64..2.5) {
        let sim = common::simulator(common::tempered_stable(), common::drifts()[1].1.clone(), 1.0, 1e-2);
        let full = sim.terminal_state(theta, x0, 1.0, &jumps).unwrap();
        let reduced = sim.density_state(theta, x0, 1.0, &jumps).unwrap();
        for (a, b) in [(full.x, reduced.x), (full.dx, reduced.dx), (full.d2x, reduced.d2x), (full.delta1, reduced.delta1)] {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn large_jumps_only_move_the_state(u in prop_oneof![1.0f64..5.0, -5.0f64..-1.0], x in -2.0f64..2.0) {
        let sim = common::ou(1.0, 1e-3);
        let mut s = levy_malliavin::variation::VariationState::initial(x);
        s.dx = 0.7;
        s.d2x = -0.2;
        s.delta1 = 0.3;
        let after = sim.jump_update(&s, u);
        prop_assert_eq!(after.x, x + u);
        prop_assert_eq!((after.dx, after.d2x, after.d3x, after.delta1, after.d_delta1), (s.dx, s.d2x, s.d3x, s.delta1, s.d_delta1));
    }

    #[test]
    fn path_streams_are_reproducible(seed in any::<u64>(), label in any::<u64>(), index in any::<u64>()) {
        let a = StreamSeed::new(seed).child(label).path_rng(index).next_u64();
        let b = StreamSeed::new(seed).child(label).path_rng(index).next_u64();
        prop_assert_eq!(a, b);
        let other = StreamSeed::new(seed).child(label).path_rng(index.wrapping_add(1)).next_u64();
        prop_assert_ne!(a, other);
    }

    #[test]
    fn running_moments_match_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let acc: MeanAccumulator = xs.iter().copied().collect();
        let n = xs.len() as f64;
        let mean = compensated_sum(xs.iter().copied()) / n;
        let var = compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1.0);
        prop_assert!((acc.mean() - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        prop_assert!((acc.variance() - var).abs() <= 1e-9 * var.max(1.0));
        prop_assert!((acc.stderr() - (var / n).sqrt()).abs() <= 1e-9 * var.sqrt().max(1.0));
    }

    #[test]
    fn default_step_resolves_the_horizon(h in 1e-3f64..100.0) {
        let dt = default_step(h);
        prop_assert!(dt > 0.0 && dt <= 1e-3 && dt <= h / 200.0 * (1.0 + 1e-15));
    }

    #[test]
    fn observations_survive_csv(x0 in -5.0f64..5.0, steps in prop::collection::vec((1e-3f64..2.0, -5.0f64..5.0), 1..20)) {
        let mut t = 0.0;
        let (times, values): (Vec<f64>, Vec<f64>) = steps.iter().map(|&(d, x)| { t += d; (t, x) }).unzip();
        let obs = ObservationSet::new(x0, times, values, None).unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let back = ObservationSet::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, obs);
    }
}
