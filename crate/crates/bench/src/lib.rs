//! Fixtures shared by the benchmarks.

use mslayer::{generate, GenerationConfig, LatencyTable, Scenario};

/// Default-scale scenario (15 SCNs, 100 users, 20 services, 116 layers).
pub fn default_scale(seed: u64) -> Scenario {
    generate(&GenerationConfig { seed, ..Default::default() }).expect("default configuration is valid")
}

/// The reduced scale used for trend sweeps: 8 SCNs and 40 users.
pub fn reduced_scale(seed: u64) -> Scenario {
    generate(&GenerationConfig { seed, num_scns: 8, num_users: 40, ..Default::default() })
        .expect("reduced configuration is valid")
}

pub fn with_latencies(s: Scenario) -> (Scenario, LatencyTable) {
    let lt = LatencyTable::build(&s);
    (s, lt)
}
