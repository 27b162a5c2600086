//! Experiment harness for the scream-core algorithms: scenario generation,
//! multi-seed runs, CSV output and the acceptance checks.

pub mod checks;
pub mod config;
pub mod control_bench;
pub mod oco_bench;
pub mod output;
pub mod scenario;
pub mod sysid_bench;

/// Thread pool sized by `SCREAM_WORKERS` (defaults to the number of CPUs).
pub fn worker_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SCREAM_WORKERS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("SCREAM_WORKERS must be a positive integer, got {v:?}"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}
