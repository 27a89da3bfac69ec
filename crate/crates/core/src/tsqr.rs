//! Tall-skinny QR over the 1D block order of a distributed block, and the
//! block orthonormalization built on it.
//!
//! Leaves are the `p` row blocks. Level `k` of the reduction tree merges
//! groups of `radix_k` siblings: they allgather their current `R` factors,
//! each factors the same stacked matrix, and each keeps its own `n × n`
//! slice of the stacked `Q`. Every rank ends with the final `R`, and `Q` is
//! recovered locally by multiplying the slices back down the tree.

use alloc::vec::Vec;

use crate::dense::{householder_qr, DenseBlock};
use crate::dist_spmm::{column_norms, gram, DistDense1D};
use crate::procgrid::{block_range, Comm, GridTopology, Layout};
use crate::{random_block_rows, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    /// Every local factorization has a non-negative `R` diagonal, which
    /// makes the distributed `R` unique for full-rank input.
    #[default]
    NonNegativeDiagonal,
    /// Whatever signs the Householder reflections produce.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TsqrOptions {
    /// Preferred fan-in of the reduction tree.
    pub branching: usize,
    pub signs: SignConvention,
}

impl Default for TsqrOptions {
    fn default() -> Self {
        Self {
            branching: 2,
            signs: SignConvention::default(),
        }
    }
}

/// Fan-in of each tree level for `p` leaves: factors of `branching` first,
/// then the remaining prime factors in ascending order. Empty for `p = 1`.
pub fn tree_radices(p: usize, branching: usize) -> Result<Vec<usize>> {
    if branching < 2 || p == 0 {
        return Err(Error::InvalidConfig("TSQR branching must be at least 2".into()));
    }
    let mut rest = p;
    let mut out = Vec::new();
    while rest.is_multiple_of(branching) {
        out.push(branching);
        rest /= branching;
    }
    let mut f = 2;
    while rest > 1 {
        while rest.is_multiple_of(f) {
            out.push(f);
            rest /= f;
        }
        f += 1;
    }
    Ok(out)
}

/// Local factors of one TSQR run.
#[derive(Debug, Clone, PartialEq)]
pub struct TsqrTree {
    grid: GridTopology,
    layout: Layout,
    rank: usize,
    global_rows: usize,
    local_rows: usize,
    /// Leaf `Q`, zero-padded to at least `n` rows.
    leaf_q: DenseBlock,
    /// This rank's `n × n` slice of each level's stacked `Q`, bottom-up.
    levels: Vec<DenseBlock>,
}

impl TsqrTree {
    pub fn height(&self) -> usize {
        self.levels.len()
    }
}

/// Factors the distributed block `v = Q·R`; `R` is returned on every rank.
pub fn tsqr_factor(comm: &mut Comm, v: &DistDense1D, opts: &TsqrOptions) -> Result<(TsqrTree, DenseBlock)> {
    let grid = v.grid();
    let n = v.cols();
    if v.global_rows() < n {
        return Err(Error::DimensionMismatch(alloc::format!(
            "TSQR of {} rows and {n} columns",
            v.global_rows()
        )));
    }
    let nonneg = opts.signs == SignConvention::NonNegativeDiagonal;
    let radices = tree_radices(grid.p(), opts.branching)?;
    let local = v.local();
    let leaf_rows = local.rows().max(n);
    let (leaf_q, mut r) = householder_qr(&local.resized_rows(leaf_rows), nonneg)?;
    comm.add_flops(2 * (leaf_rows * n * n) as u64);

    let leaf = v.block_index();
    let mut stride = 1;
    let mut levels = Vec::with_capacity(radices.len());
    for &radix in &radices {
        let digit = (leaf / stride) % radix;
        let base = leaf - digit * stride;
        let members: Vec<usize> = (0..radix)
            .map(|t| grid.block_owner(base + t * stride, v.layout()))
            .collect();
        let stacked = comm.allgather(&members, r.data())?;
        let blocks = stacked
            .chunks(n * n)
            .map(|c| DenseBlock::from_col_major(n, n, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let (q, r_next) = householder_qr(&DenseBlock::vcat(&blocks)?, nonneg)?;
        comm.add_flops(2 * (radix * n * n * n) as u64);
        levels.push(q.row_range(digit * n..(digit + 1) * n));
        r = r_next;
        stride *= radix;
    }
    let tree = TsqrTree {
        grid,
        layout: v.layout(),
        rank: v.rank(),
        global_rows: v.global_rows(),
        local_rows: local.rows(),
        leaf_q,
        levels,
    };
    Ok((tree, r))
}

/// The explicit distributed `Q` of a factorization, formed without
/// communication.
pub fn tsqr_form_q(tree: &TsqrTree) -> Result<DistDense1D> {
    let n = tree.leaf_q.cols();
    let mut m = DenseBlock::identity(n);
    for s in tree.levels.iter().rev() {
        m = s.matmul(&m)?;
    }
    let q = tree.leaf_q.matmul(&m)?.row_range(0..tree.local_rows);
    DistDense1D::from_local(tree.grid, tree.layout, tree.rank, tree.global_rows, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OrthoOptions {
    /// Seed and stream for replacement vectors.
    pub seed: u64,
    pub stream: u64,
    pub tsqr: TsqrOptions,
}

const MAX_RETRIES: usize = 5;
/// Columns whose `R_jj` falls below this fraction of their input norm are
/// numerically inside the locked span.
const SPAN_TOL: f64 = 1e-10;
/// Columns whose `R_jj` falls below this fraction of `‖R(:, j)‖` are
/// numerically dependent on earlier new columns.
const DEPENDENCE_TOL: f64 = 1e-5;

/// Orthonormalizes `v_new` against the orthonormal `v_locked` and
/// internally: two passes of block classical Gram-Schmidt, then TSQR.
/// Rank-deficient columns are swapped for seeded random vectors (identical
/// on all ranks) and the whole step is repeated.
pub fn ortho_block_against(
    comm: &mut Comm,
    v_new: &DistDense1D,
    v_locked: &DistDense1D,
    opts: &OrthoOptions,
) -> Result<DistDense1D> {
    let k = v_new.cols();
    let mut x = v_new.clone();
    let mut original = column_norms(comm, &x)?;
    for attempt in 0..=MAX_RETRIES {
        let mut y = x.clone();
        if v_locked.cols() > 0 {
            for _ in 0..2 {
                let c = gram(comm, v_locked, &y)?;
                let proj = v_locked.local().matmul(&c)?;
                comm.add_flops(2 * (proj.rows() * v_locked.cols() * k) as u64);
                y = y.with_local(y.local().zip_map(&proj, |a, b| a - b)?)?;
            }
        }
        let (tree, r) = tsqr_factor(comm, &y, &opts.tsqr)?;
        let bad: Vec<usize> = (0..k)
            .filter(|&j| {
                let d = libm::fabs(r.get(j, j));
                let col = libm::sqrt((0..=j).map(|i| r.get(i, j) * r.get(i, j)).sum());
                !(d > SPAN_TOL * original[j] && d > DEPENDENCE_TOL * col)
            })
            .collect();
        if bad.is_empty() {
            return tsqr_form_q(&tree);
        }
        if attempt == MAX_RETRIES {
            break;
        }
        let stream = opts.stream.wrapping_mul(64).wrapping_add(attempt as u64);
        let fresh = random_block_rows(x.global_rows(), x.row_range(), bad.len(), opts.seed, stream);
        let mut local = x.local().clone();
        for (t, &j) in bad.iter().enumerate() {
            local.col_mut(j).copy_from_slice(fresh.col(t));
        }
        x = x.with_local(local)?;
        original = column_norms(comm, &x)?;
    }
    Err(Error::RetryLimit(MAX_RETRIES))
}

/// [`ortho_block_against`] on a single process.
pub(crate) fn ortho_block_serial(new: &DenseBlock, basis: &DenseBlock, seed: u64, stream: u64) -> Result<DenseBlock> {
    let grid = GridTopology::new(1)?;
    let n = new.rows();
    let wrap = |b: &DenseBlock| DistDense1D::from_local(grid, Layout::V, 0, n, b.clone());
    let opts = OrthoOptions { seed, stream, tsqr: TsqrOptions::default() };
    let q = ortho_block_against(&mut Comm::solo(), &wrap(new)?, &wrap(basis)?, &opts)?;
    debug_assert_eq!(block_range(n, 1, 0), 0..n);
    Ok(q.into_local())
}
