//! Parallel ensemble execution.

use commflow::mcmc::{cluster, ClustererConfig};
use commflow::resolver::PartitionCloud;
use commflow::{Partition, SegmentGraph};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{HarnessError, Result};

pub fn thread_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))
}

/// Runs one clusterer per seed on `pool`. The cloud is ordered by seed
/// position, whatever order the runs finish in.
pub fn run_segment_pipeline(
    g: &SegmentGraph,
    cfg: &ClustererConfig,
    seeds: &[u64],
    pool: &ThreadPool,
) -> Result<PartitionCloud> {
    if seeds.is_empty() {
        return Err(HarnessError::Usage("at least one seed is required".into()));
    }
    let partitions = pool.install(|| run_jobs(seeds.iter().map(|&seed| (g, seed)).collect(), cfg))?;
    Ok(PartitionCloud::new(g.segment_index(), partitions)?)
}

/// Clusters every `(graph, seed)` job, returning results in job order. The
/// first failing job, by position, is reported.
pub(crate) fn run_jobs(jobs: Vec<(&SegmentGraph, u64)>, cfg: &ClustererConfig) -> Result<Vec<Partition>> {
    let results: Vec<_> = jobs
        .into_par_iter()
        .map(|(g, seed)| cluster(g, &cfg.with_seed(seed)).map_err(|source| HarnessError::Run { seed, source }))
        .collect();
    results.into_iter().collect()
}
