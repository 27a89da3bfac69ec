//! Distributed Block Chebyshev-Davidson.
//!
//! Each rank runs the same driver as the sequential solver on its V-layout
//! rows. Tall-skinny products go through the 1.5D SpMM, Gram matrices and
//! norms through fixed-order allreduces, and orthonormalization through
//! block Gram-Schmidt plus TSQR. The projected matrix `H`, its
//! eigendecomposition and all counters are computed redundantly and stay
//! bit-identical on every rank, so every rank takes the same branches.

use alloc::vec::Vec;

use crate::chebdav::{solve_with, EigResult, FilterBounds, SolverBackend, SolverConfig, SolverState};
use crate::dense::DenseBlock;
use crate::dist_spmm::{apply_in_v_layout, column_norms, dist_chebyshev_filter, gram, DistDense1D, DistSparse2D};
use crate::procgrid::{block_range, Comm, CostCounters, GridTopology, Layout, Phase};
use crate::tsqr::{ortho_block_against, OrthoOptions, TsqrOptions};
use crate::{random_block_rows, Error, Result};

/// Per-rank solver state; `V` and `W` hold this rank's V-layout rows while
/// `H`, the Ritz data and the counters are replicated.
pub type DistSolverState = SolverState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistOptions {
    /// Compare a fingerprint of the replicated state across all ranks after
    /// every iteration (costs one extra allgather per iteration, booked
    /// under [`Phase::Debug`]).
    pub check_replication: bool,
    pub tsqr: TsqrOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistEigResult {
    pub values: Vec<f64>,
    /// This rank's rows of the eigenvectors, V-layout.
    pub vectors: DistDense1D,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub config: SolverConfig,
    /// Costs charged during each iteration, in order.
    pub trace: Vec<CostCounters>,
}

/// [`SolverBackend`] over one rank of a simulated grid.
pub struct DistBackend<'a> {
    comm: &'a mut Comm,
    a: &'a DistSparse2D,
    ident: DistSparse2D,
    grid: GridTopology,
    rank: usize,
    seed: u64,
    opts: DistOptions,
    random_streams: u64,
    ortho_calls: u64,
    snapshot: CostCounters,
    trace: Vec<CostCounters>,
}

impl<'a> DistBackend<'a> {
    pub fn new(comm: &'a mut Comm, a: &'a DistSparse2D, seed: u64, opts: DistOptions) -> Result<Self> {
        let grid = a.grid();
        if comm.size() != grid.p() || comm.rank() != a.rank() {
            return Err(Error::DimensionMismatch("communicator does not match the matrix grid".into()));
        }
        let ident = DistSparse2D::identity(a.global_n(), grid, a.rank())?;
        let snapshot = comm.counters().clone();
        Ok(Self {
            rank: a.rank(),
            comm,
            a,
            ident,
            grid,
            seed,
            opts,
            random_streams: 0,
            ortho_calls: 0,
            snapshot,
            trace: Vec::new(),
        })
    }

    fn wrap(&self, local: &DenseBlock) -> Result<DistDense1D> {
        DistDense1D::from_local(self.grid, Layout::V, self.rank, self.a.global_n(), local.clone())
    }

    /// Costs charged per completed iteration so far.
    pub fn trace(&self) -> &[CostCounters] {
        &self.trace
    }

    fn check_block(&self, v: &DistDense1D) -> Result<()> {
        if v.layout() != Layout::V || v.grid() != self.grid || v.rank() != self.rank || v.global_rows() != self.a.global_n() {
            return Err(Error::LayoutMismatch("expected a V-layout block on the matrix grid".into()));
        }
        Ok(())
    }

    fn check_replication(&mut self, state: &SolverState, iteration: usize) -> Result<()> {
        let fp = state.replicated_fingerprint();
        let outer = self.comm.set_phase(Phase::Debug);
        let halves = [(fp >> 32) as f64, (fp & 0xffff_ffff) as f64];
        let all = self.comm.allgather(&self.grid.world(), &halves);
        self.comm.set_phase(outer);
        if all?.chunks(2).any(|c| c != halves) {
            return Err(Error::ReplicationDiverged(iteration));
        }
        Ok(())
    }
}

impl SolverBackend for DistBackend<'_> {
    fn n(&self) -> usize {
        self.a.global_n()
    }

    fn local_rows(&self) -> usize {
        let n = self.a.global_n();
        block_range(n, self.grid.p(), self.grid.owned_block(self.rank, Layout::V)).len()
    }

    fn filter(&mut self, v: &DenseBlock, bounds: &FilterBounds, m: usize) -> Result<DenseBlock> {
        let dv = self.wrap(v)?;
        Ok(dist_chebyshev_filter(self.comm, self.a, &self.ident, &dv, m, bounds)?.into_local())
    }

    fn orthonormalize(&mut self, new: &DenseBlock, basis: &DenseBlock) -> Result<DenseBlock> {
        let opts = OrthoOptions {
            seed: self.seed,
            stream: crate::chebdav::ORTHO_STREAM_BASE + self.ortho_calls,
            tsqr: self.opts.tsqr,
        };
        self.ortho_calls += 1;
        let (x, l) = (self.wrap(new)?, self.wrap(basis)?);
        Ok(ortho_block_against(self.comm, &x, &l, &opts)?.into_local())
    }

    fn apply(&mut self, v: &DenseBlock) -> Result<DenseBlock> {
        let dv = self.wrap(v)?;
        Ok(apply_in_v_layout(self.comm, self.a, &self.ident, &dv)?.into_local())
    }

    fn gram(&mut self, a: &DenseBlock, b: &DenseBlock) -> Result<DenseBlock> {
        let (da, db) = (self.wrap(a)?, self.wrap(b)?);
        gram(self.comm, &da, &db)
    }

    fn column_norms(&mut self, v: &DenseBlock) -> Result<Vec<f64>> {
        let dv = self.wrap(v)?;
        column_norms(self.comm, &dv)
    }

    fn random_block(&mut self, cols: usize) -> Result<DenseBlock> {
        let stream = self.random_streams;
        self.random_streams += 1;
        let n = self.a.global_n();
        let rows = block_range(n, self.grid.p(), self.grid.owned_block(self.rank, Layout::V));
        Ok(random_block_rows(n, rows, cols, self.seed, stream))
    }

    fn set_phase(&mut self, phase: Phase) {
        self.comm.set_phase(phase);
    }

    fn after_iteration(&mut self, state: &SolverState, iteration: usize) -> Result<()> {
        let now = self.comm.counters().clone();
        self.trace.push(now.since(&self.snapshot));
        if self.opts.check_replication {
            self.check_replication(state, iteration)?;
        }
        self.snapshot = self.comm.counters().clone();
        Ok(())
    }
}

/// Appends the V-layout block `q` to the basis and extends the replicated
/// `H` with `(active V)ᵀ·A·q`, summed over the row then the column
/// communicator.
pub fn update_h_distributed(backend: &mut DistBackend<'_>, state: &mut DistSolverState, q: &DistDense1D) -> Result<()> {
    backend.check_block(q)?;
    state.rayleigh_ritz_update(backend, q.local())
}

/// Residual test and locking on the distributed basis. Returns the number
/// of newly locked pairs, identical on every rank.
pub fn residual_distributed(backend: &mut DistBackend<'_>, state: &mut DistSolverState, tol: f64) -> Result<usize> {
    state.residual_deflate(backend, tol)
}

/// Distributed solve; every rank of the grid must call it with its own tile
/// of `a` and its own V-layout rows of `v_init`.
pub fn dist_bchdav_solve(
    comm: &mut Comm,
    a: &DistSparse2D,
    cfg: &SolverConfig,
    v_init: Option<&DistDense1D>,
    bounds: Option<FilterBounds>,
    opts: &DistOptions,
) -> Result<DistEigResult> {
    let mut backend = DistBackend::new(comm, a, cfg.seed, *opts)?;
    if let Some(v) = v_init {
        backend.check_block(v)?;
    }
    let EigResult { values, vectors, residuals, iterations, converged, config } =
        solve_with(&mut backend, cfg, v_init.map(|v| v.local()), bounds)?;
    let vectors = backend.wrap(&vectors)?;
    backend.comm.set_phase(Phase::Other);
    Ok(DistEigResult {
        values,
        vectors,
        residuals,
        iterations,
        converged,
        config,
        trace: backend.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebdav::{bchdav_solve, OrthoMethod};
    use crate::dist_spmm::{collect_dense, distribute_dense, distribute_sparse};
    use crate::chebdav::SerialBackend;
    use crate::uniform_matrix;
    use crate::graph::{gen_sbm, normalized_laplacian};
    use crate::procgrid::ceil_log2;
    use crate::testutil::spmd;

    #[test]
    fn single_rank_matches_sequential_bitwise() {
        let a = normalized_laplacian(&gen_sbm(120, 3, 0.2, 0.02, 4).unwrap().0);
        let mut cfg = SolverConfig::new(6, 4, 11);
        cfg.ortho = OrthoMethod::BlockCgsTsqr;
        let seq = bchdav_solve(&a, &cfg, None, None).unwrap();
        let g = GridTopology::new(1).unwrap();
        let mut comm = Comm::solo();
        let at = distribute_sparse(&a, g, 0).unwrap();
        let dist = dist_bchdav_solve(&mut comm, &at, &cfg, None, None, &DistOptions::default()).unwrap();
        assert_eq!(dist.values, seq.values);
        assert_eq!(dist.vectors.local(), &seq.vectors);
        assert_eq!(dist.iterations, seq.iterations);
    }

    #[test]
    fn nine_ranks_agree_and_stay_replicated() {
        let n = 180;
        let a = normalized_laplacian(&gen_sbm(n, 3, 0.2, 0.02, 8).unwrap().0);
        let mut cfg = SolverConfig::new(8, 4, 11);
        cfg.ortho = OrthoMethod::BlockCgsTsqr;
        let seq = bchdav_solve(&a, &cfg, None, None).unwrap();
        let g = GridTopology::new(9).unwrap();
        let opts = DistOptions { check_replication: true, ..Default::default() };
        let out = spmd(9, |c| {
            let at = distribute_sparse(&a, g, c.rank()).unwrap();
            let r = dist_bchdav_solve(c, &at, &cfg, None, None, &opts).unwrap();
            let v = collect_dense(c, &r.vectors).unwrap();
            (r.values, v, r.trace)
        });
        for (values, _, _) in &out {
            assert_eq!(values, &out[0].0);
            for (x, y) in values.iter().zip(&seq.values) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
        // filter words per iteration: the 2·m·N·k_b/√p term, exactly
        let m = cfg.m as u64;
        let q = 3u64;
        for it in &out[0].2 {
            let spmm_words = 2 * q * (n as u64 / 9) * cfg.k_b as u64;
            assert_eq!(it.phase_tally(Phase::FilterSpmm).words, m * spmm_words);
            assert_eq!(it.phase_tally(Phase::FilterRedistribute).words, m * spmm_words);
            assert_eq!(it.phase_tally(Phase::FilterSpmm).messages, 2 * m * ceil_log2(3));
            let kb = cfg.k_b as u64;
            assert_eq!(it.phase_tally(Phase::Residual).words, 2 * spmm_words + 4 * kb * ceil_log2(3));
            assert!(it.phase_tally(Phase::RayleighQuotient).words <= 4 * cfg.act_max as u64 * kb * ceil_log2(3));
        }
    }

    fn random_orthonormal(n: usize, k: usize, stream: u64) -> DenseBlock {
        crate::tsqr::ortho_block_serial(&uniform_matrix(n, k, 3, stream), &DenseBlock::zeros(n, 0), 3, 99).unwrap()
    }

    #[test]
    fn distributed_h_update_matches_sequential() {
        let n = 64;
        let a = normalized_laplacian(&gen_sbm(n, 2, 0.3, 0.05, 1).unwrap().0);
        let cfg = SolverConfig::new(4, 4, 11).fit_to(n).unwrap();
        let q = random_orthonormal(n, 8, 0);
        let (q1, q2) = (q.columns(0..4), q.columns(4..8));
        let mut seq = SolverState::new(&cfg, n, 0.1);
        let mut sb = SerialBackend::new(&a, 0, OrthoMethod::Dgks);
        seq.rayleigh_ritz_update(&mut sb, &q1).unwrap();
        seq.rayleigh_ritz_update(&mut sb, &q2).unwrap();
        let g = GridTopology::new(4).unwrap();
        let hs = spmd(4, |c| {
            let r = c.rank();
            let at = distribute_sparse(&a, g, r).unwrap();
            let mut b = DistBackend::new(c, &at, 0, DistOptions::default()).unwrap();
            let mut st = SolverState::new(&cfg, b.local_rows(), 0.1);
            for blk in [&q1, &q2] {
                let d = distribute_dense(blk, g, Layout::V, r).unwrap();
                update_h_distributed(&mut b, &mut st, &d).unwrap();
            }
            st.h_active()
        });
        let want = seq.h_active();
        for h in &hs {
            assert_eq!(h, &hs[0]);
            for (x, y) in h.data().iter().zip(want.data()) {
                assert!((x - y).abs() <= 1e-13);
            }
        }
        let u = distribute_dense(&q1, g, Layout::U, 0).unwrap();
        let mut comm = Comm::solo();
        let at1 = distribute_sparse(&a, GridTopology::new(1).unwrap(), 0).unwrap();
        let mut b1 = DistBackend::new(&mut comm, &at1, 0, DistOptions::default()).unwrap();
        let mut st = SolverState::new(&cfg, n, 0.1);
        assert!(matches!(update_h_distributed(&mut b1, &mut st, &u), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn residuals_agree_across_grid_sizes() {
        let n = 72;
        let a = normalized_laplacian(&gen_sbm(n, 2, 0.3, 0.05, 2).unwrap().0);
        let cfg = SolverConfig::new(4, 4, 11).fit_to(n).unwrap();
        let q = random_orthonormal(n, 4, 1);
        let run = |p: usize| {
            let g = GridTopology::new(p).unwrap();
            spmd(p, |c| {
                let r = c.rank();
                let at = distribute_sparse(&a, g, r).unwrap();
                let mut b = DistBackend::new(c, &at, 0, DistOptions::default()).unwrap();
                let mut st = SolverState::new(&cfg, b.local_rows(), 0.1);
                update_h_distributed(&mut b, &mut st, &distribute_dense(&q, g, Layout::V, r).unwrap()).unwrap();
                st.rotate().unwrap();
                let e_c = residual_distributed(&mut b, &mut st, 1e-1).unwrap();
                (e_c, st.eval().to_vec(), st.ritz_values().to_vec())
            })
        };
        let (one, four) = (run(1), run(4));
        for r in &four {
            assert_eq!(r.0, one[0].0);
            assert_eq!(r.1, four[0].1);
            for (x, y) in r.2.iter().zip(&one[0].2) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rotation_preserves_active_span() {
        let n = 50;
        let a = normalized_laplacian(&gen_sbm(n, 2, 0.3, 0.05, 4).unwrap().0);
        let cfg = SolverConfig::new(4, 4, 11).fit_to(n).unwrap();
        let mut st = SolverState::new(&cfg, n, 0.1);
        let mut sb = SerialBackend::new(&a, 0, OrthoMethod::Dgks);
        st.rayleigh_ritz_update(&mut sb, &random_orthonormal(n, 8, 5)).unwrap();
        let before = st.basis();
        st.rotate().unwrap();
        let after = st.basis();
        // projector difference is zero iff the spans coincide
        let pb = before.matmul(&before.transpose()).unwrap();
        let pa = after.matmul(&after.transpose()).unwrap();
        for (x, y) in pa.data().iter().zip(pb.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}
