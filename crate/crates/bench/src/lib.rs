//! Shared fixtures for the benchmarks.

use mecopt_core::harness::{generate_scenario, Scenario, ScenarioSpec};

pub fn scenario(num_users: usize, num_servers: usize, seed: u64) -> Scenario {
    generate_scenario(&ScenarioSpec {
        seed,
        num_users,
        num_servers,
        ..ScenarioSpec::default()
    })
    .expect("default ranges give a valid scenario")
}
