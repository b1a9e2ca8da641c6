//! Results depend on the seed only, never on the worker count.

mod common;

use levy_malliavin::estimators::TerminalBatch;
use levy_malliavin::inference::{log_likelihood, simulate_observations, LikelihoodOptions};
use levy_malliavin::rng::StreamSeed;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn batch_estimates_are_bitwise_identical_across_pools() {
    let sim = common::ou(1.0, 1e-3);
    let run = || {
        let b = TerminalBatch::simulate(&sim, 1.0, 1.0, 1.0, 3000, StreamSeed::new(11)).unwrap();
        let h = b.silverman_bandwidth();
        [-0.5, 0.3, 1.2]
            .iter()
            .flat_map(|&y| {
                [
                    b.density(y).value,
                    b.density(y).stderr,
                    b.score(y, h).value,
                    b.cdf_upper(y).value,
                ]
            })
            .map(f64::to_bits)
            .collect::<Vec<u64>>()
    };
    let one = in_pool(1, run);
    for threads in [2, 3, 8] {
        assert_eq!(in_pool(threads, run), one, "{threads} threads");
    }
}

#[test]
fn likelihood_is_bitwise_identical_across_pools() {
    let sim = common::ou(0.5, 1e-2);
    let times: Vec<f64> = (1..=6).map(|k| 0.5 * k as f64).collect();
    let obs = simulate_observations(&sim, 1.0, 1.0, &times, StreamSeed::new(3)).unwrap();
    let opts = LikelihoodOptions {
        n_paths: 400,
        score_bandwidth: Some(0.2),
        ..Default::default()
    };
    let run = || {
        let ll = log_likelihood(&sim, 1.3, &obs, &opts, StreamSeed::new(4)).unwrap();
        (ll.estimate.value.to_bits(), ll.score_sum().unwrap().value.to_bits())
    };
    let one = in_pool(1, run);
    assert_eq!(in_pool(4, run), one);
}

#[test]
fn distinct_seeds_give_distinct_samples() {
    let sim = common::ou(1.0, 1e-3);
    let a = TerminalBatch::simulate_density_only(&sim, 1.0, 1.0, 1.0, 200, StreamSeed::new(1)).unwrap();
    let b = TerminalBatch::simulate_density_only(&sim, 1.0, 1.0, 1.0, 200, StreamSeed::new(2)).unwrap();
    assert_ne!(a.density(0.5).value, b.density(0.5).value);
}
