//! Replication-parallel simulation. Outcomes are collected by replication
//! index and reduced in that order, so the report does not depend on the
//! number of threads.

use pairdesign_core::sim::{aggregate, run_replication, Population, SimConfig, SimContext, SimReport};
use pairdesign_core::Result;
use rayon::prelude::*;

/// Run on a dedicated pool of `threads` workers (`0` = rayon's default).
pub fn run_parallel(population: Population, config: SimConfig, threads: usize) -> Result<SimReport> {
    let ctx = SimContext::new(population, config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    let outcomes = pool.install(|| {
        (0..ctx.replications()).into_par_iter().map(|r| run_replication(&ctx, r)).collect::<Result<Vec<_>>>()
    })?;
    aggregate(&ctx, &outcomes)
}
