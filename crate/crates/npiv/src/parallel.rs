//! Seed streams, the worker pool and the parallel bootstrap.

use npiv_core::inference::{bootstrap_multipliers, summarize_bootstrap, BootstrapResult, MultiplierLaw};
use npiv_core::pipeline::BootstrapContext;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "NPIV_THREADS";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under `master`: a function of the index only,
/// so the thread schedule never changes results.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(master) ^ rep)
}

/// Seed of the bootstrap multipliers within a replication.
pub fn bootstrap_seed(rep_seed: u64) -> u64 {
    splitmix64(rep_seed ^ 0xB007_5EED)
}

/// Worker count from the argument, then `NPIV_THREADS`, then all cores.
pub fn thread_count(explicit: Option<usize>) -> Result<usize> {
    if let Some(t) = explicit {
        return Ok(t.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn thread_pool(explicit: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(explicit)?)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Multiplier bootstrap with draws evaluated in parallel; draw `b` uses
/// substream `b` of `seed`, so the result equals the serial bootstrap.
pub fn bootstrap_parallel(
    ctx: &BootstrapContext<'_>,
    draws: usize,
    seed: u64,
    level: f64,
    law: MultiplierLaw,
) -> Result<BootstrapResult> {
    if draws == 0 {
        return Err(HarnessError::Config("bootstrap needs at least one draw".into()));
    }
    let n = ctx.sample_len();
    let outcomes: Vec<_> = (0..draws as u64)
        .into_par_iter()
        .map(|b| ctx.draw(&bootstrap_multipliers(law, seed, b, n)))
        .collect();
    Ok(summarize_bootstrap(outcomes, level, law)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_index_and_master() {
        assert_eq!(replication_seed(1, 5), replication_seed(1, 5));
        assert_ne!(replication_seed(1, 5), replication_seed(1, 6));
        assert_ne!(replication_seed(1, 5), replication_seed(2, 5));
        assert_ne!(bootstrap_seed(7), 7);
    }

    #[test]
    fn explicit_thread_count_wins() {
        assert_eq!(thread_count(Some(3)).unwrap(), 3);
    }
}
