//! Fixtures shared by the benchmarks.

use tmmsb::scaling::bench_b;
use tmmsb::{simulate, FitConfig, SimulationConfig, TransactionLog};

/// A simulated log with `m` nodes, `n` transactions and `k` groups.
pub fn network(m: usize, n: usize, k: usize, seed: u64) -> TransactionLog {
    simulate(&SimulationConfig::new(m, n, 0.1, bench_b(k), seed))
        .expect("bench network parameters are valid")
        .log
}

/// Exactly `iters` outer iterations of `iters` inner sweeps.
pub fn fixed_config(k: usize, iters: usize) -> FitConfig {
    FitConfig {
        k,
        max_outer_iters: iters,
        max_inner_iters: iters,
        rel_tol: f64::MIN_POSITIVE,
        ..FitConfig::default()
    }
}
