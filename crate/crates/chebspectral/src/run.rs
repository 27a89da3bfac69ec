//! Sequential and simulated-distributed solves, and the clustering back end.

use chebspectral_core::chebdav::{bchdav_solve, EigResult, FilterBounds, SolverConfig};
use chebspectral_core::clustering::{ari, kmeans, nmi, row_normalize, KMeansResult, Partition};
use chebspectral_core::dense::DenseBlock;
use chebspectral_core::dist_chebdav::{dist_bchdav_solve, DistOptions};
use chebspectral_core::dist_spmm::{collect_dense, distribute_dense, distribute_sparse};
use chebspectral_core::graph::CsrMatrix;
use chebspectral_core::procgrid::{CostCounters, GridTopology, Layout, Phase};
use chebspectral_core::Result;

use crate::transport::{run_spmd, Scheduler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Sequential,
    Distributed { p: usize, scheduler: Scheduler, check_replication: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Vectors are the full `N × k_want` block regardless of mode.
    pub result: EigResult,
    /// Per-rank maximum of every counter; zero for a sequential run.
    pub counters: CostCounters,
    /// Per-iteration counters (rank-wise maximum); empty when sequential.
    pub trace: Vec<CostCounters>,
}

pub fn solve(
    a: &CsrMatrix,
    cfg: &SolverConfig,
    v_init: Option<&DenseBlock>,
    bounds: Option<FilterBounds>,
    mode: Mode,
) -> Result<SolveOutput> {
    let Mode::Distributed { p, scheduler, check_replication } = mode else {
        let result = bchdav_solve(a, cfg, v_init, bounds)?;
        return Ok(SolveOutput { result, counters: CostCounters::new(), trace: Vec::new() });
    };
    let grid = GridTopology::new(p)?;
    let opts = DistOptions { check_replication, ..Default::default() };
    let per_rank = run_spmd(p, scheduler, |comm| {
        let rank = comm.rank();
        let tile = distribute_sparse(a, grid, rank)?;
        let init = v_init.map(|v| distribute_dense(v, grid, Layout::V, rank)).transpose()?;
        let r = dist_bchdav_solve(comm, &tile, cfg, init.as_ref(), bounds, &opts)?;
        comm.set_phase(Phase::Collect);
        let vectors = collect_dense(comm, &r.vectors)?;
        comm.set_phase(Phase::Other);
        let out = EigResult {
            values: r.values,
            vectors,
            residuals: r.residuals,
            iterations: r.iterations,
            converged: r.converged,
            config: r.config,
        };
        Ok((out, comm.counters().clone(), r.trace))
    });
    let per_rank: Vec<_> = per_rank.into_iter().collect::<Result<_>>()?;
    let counters = CostCounters::merge_max(per_rank.iter().map(|r| &r.1));
    let iters = per_rank[0].2.len();
    let trace = (0..iters).map(|i| CostCounters::merge_max(per_rank.iter().map(|r| &r.2[i]))).collect();
    let result = per_rank.into_iter().next().expect("p >= 1").0;
    Ok(SolveOutput { result, counters, trace })
}

/// Clustering of one spectral embedding repeated with `repeats` k-means
/// seeds, scored against `truth` when given.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRuns {
    pub runs: Vec<KMeansResult>,
    /// `(ari, nmi)` per run.
    pub scores: Vec<(f64, f64)>,
}

impl ClusterRuns {
    /// The run with the lowest inertia (earliest on ties).
    pub fn best(&self) -> &Partition {
        let mut best = &self.runs[0];
        for r in &self.runs[1..] {
            if r.inertia < best.inertia {
                best = r;
            }
        }
        &best.partition
    }

    pub fn mean_scores(&self) -> Option<(f64, f64)> {
        if self.scores.is_empty() {
            return None;
        }
        let n = self.scores.len() as f64;
        let (a, b) = self.scores.iter().fold((0.0, 0.0), |s, x| (s.0 + x.0, s.1 + x.1));
        Some((a / n, b / n))
    }
}

/// Restarts per k-means run.
pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;

pub fn cluster(vectors: &DenseBlock, k: usize, seed: u64, repeats: usize, truth: Option<&Partition>) -> Result<ClusterRuns> {
    let f = row_normalize(vectors);
    let mut runs = Vec::with_capacity(repeats);
    let mut scores = Vec::new();
    for r in 0..repeats.max(1) as u64 {
        let km = kmeans(&f, k, seed.wrapping_add(r), KMEANS_MAX_ITER, KMEANS_RESTARTS)?;
        if let Some(t) = truth {
            scores.push((ari(&km.partition, t)?, nmi(&km.partition, t)?));
        }
        runs.push(km);
    }
    Ok(ClusterRuns { runs, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chebspectral_core::graph::{gen_sbm, normalized_laplacian};

    #[test]
    fn lockstep_and_threaded_agree_bitwise() {
        let a = normalized_laplacian(&gen_sbm(64, 2, 0.3, 0.05, 1).unwrap().0);
        let cfg = SolverConfig::new(3, 2, 11);
        let run = |scheduler| {
            solve(&a, &cfg, None, None, Mode::Distributed { p: 4, scheduler, check_replication: true }).unwrap()
        };
        let (x, y) = (run(Scheduler::Threaded), run(Scheduler::Lockstep));
        assert_eq!(x, y);
        assert_eq!(x.trace.len(), x.result.iterations);
    }

    #[test]
    fn non_square_grid_is_rejected() {
        let a = normalized_laplacian(&gen_sbm(20, 2, 0.5, 0.1, 1).unwrap().0);
        let mode = Mode::Distributed { p: 3, scheduler: Scheduler::Threaded, check_replication: false };
        assert!(solve(&a, &SolverConfig::new(2, 2, 11), None, None, mode).is_err());
    }
}
