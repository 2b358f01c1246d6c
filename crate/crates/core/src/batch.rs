//! Seed sweeps. Runs are independent, so with the `parallel` feature they
//! are spread over the rayon pool; results always come back in seed order.

use crate::scenarios::{run_scenario, RunError, RunOutput, ScenarioConfig};

fn run_one<T>(
    config: &ScenarioConfig,
    seed: u64,
    f: &(impl Fn(u64, RunOutput) -> T + Sync),
) -> Result<T, RunError> {
    let config = ScenarioConfig {
        seed,
        ..config.clone()
    };
    run_scenario(&config).map(|out| f(seed, out))
}

/// Run `config` once per seed on the calling thread and map each output.
pub fn map_seeds_sequential<T>(
    config: &ScenarioConfig,
    seeds: &[u64],
    f: impl Fn(u64, RunOutput) -> T + Sync,
) -> Result<Vec<T>, RunError> {
    seeds.iter().map(|&s| run_one(config, s, &f)).collect()
}

/// Run `config` once per seed and map each output, in parallel when the
/// `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_seeds<T: Send>(
    config: &ScenarioConfig,
    seeds: &[u64],
    f: impl Fn(u64, RunOutput) -> T + Sync,
) -> Result<Vec<T>, RunError> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| run_one(config, s, &f)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_seeds<T: Send>(
    config: &ScenarioConfig,
    seeds: &[u64],
    f: impl Fn(u64, RunOutput) -> T + Sync,
) -> Result<Vec<T>, RunError> {
    map_seeds_sequential(config, seeds, f)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
