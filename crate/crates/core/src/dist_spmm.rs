//! A-stationary 1.5D SpMM and the distributed Chebyshev filter.
//!
//! `A` is cut into `q × q` tiles that never move; tall-skinny blocks are cut
//! into `p` row blocks. With the vector in V-layout, each grid column first
//! allgathers the `q` blocks that meet its tile column, every process
//! multiplies by its tile, and each grid row reduce-scatters the partial
//! products, leaving the result in U-layout. The filter needs its operands
//! in a single layout, so after every `A`-product the block is moved back
//! with an identity SpMM on the transposed grid.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::chebdav::{chebyshev_recurrence, FilterBounds, FilterSpace};
use crate::dense::DenseBlock;
use crate::graph::CsrMatrix;
use crate::procgrid::{block_range, coarse_range, max_block_rows, Comm, GridTopology, Layout, Phase};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileKind {
    /// Products cost `2·nnz·k` flops.
    Operator,
    /// Products only move entries and cost nothing.
    Identity,
}

/// This process's tile `A[i, j]` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSparse2D {
    grid: GridTopology,
    rank: usize,
    global_n: usize,
    kind: TileKind,
    tile: CsrMatrix,
    rows: Range<usize>,
    cols: Range<usize>,
}

impl DistSparse2D {
    /// The distributed `n × n` identity on `grid`.
    pub fn identity(n: usize, grid: GridTopology, rank: usize) -> Result<Self> {
        Self::build(&CsrMatrix::identity(n), grid, rank, TileKind::Identity)
    }

    fn build(a: &CsrMatrix, grid: GridTopology, rank: usize, kind: TileKind) -> Result<Self> {
        if rank >= grid.p() {
            return Err(Error::DimensionMismatch(format!("rank {rank} outside a grid of {}", grid.p())));
        }
        let n = a.n_rows();
        let (i, j) = grid.coords_of(rank);
        let (p, q) = (grid.p(), grid.q());
        let rows = coarse_range(n, p, q, i);
        let cols = coarse_range(n, p, q, j);
        let tile = a.submatrix(rows.clone(), cols.clone());
        Ok(Self { grid, rank, global_n: n, kind, tile, rows, cols })
    }

    pub fn grid(&self) -> GridTopology {
        self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn global_n(&self) -> usize {
        self.global_n
    }

    pub fn kind(&self) -> TileKind {
        self.kind
    }

    pub fn tile(&self) -> &CsrMatrix {
        &self.tile
    }

    /// Global rows covered by the tile.
    pub fn row_range(&self) -> Range<usize> {
        self.rows.clone()
    }

    /// Global columns covered by the tile.
    pub fn col_range(&self) -> Range<usize> {
        self.cols.clone()
    }
}

/// Extracts this rank's tile of the symmetric matrix `a`.
pub fn distribute_sparse(a: &CsrMatrix, grid: GridTopology, rank: usize) -> Result<DistSparse2D> {
    if a.n_rows() != a.n_cols() || !a.is_symmetric() {
        return Err(Error::NonSymmetric);
    }
    DistSparse2D::build(a, grid, rank, TileKind::Operator)
}

/// This rank's row block of a tall-skinny matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistDense1D {
    grid: GridTopology,
    layout: Layout,
    rank: usize,
    global_rows: usize,
    local: DenseBlock,
}

impl DistDense1D {
    pub fn from_local(
        grid: GridTopology,
        layout: Layout,
        rank: usize,
        global_rows: usize,
        local: DenseBlock,
    ) -> Result<Self> {
        let expect = block_range(global_rows, grid.p(), grid.owned_block(rank, layout)).len();
        if local.rows() != expect {
            return Err(Error::DimensionMismatch(format!(
                "rank {rank} owns {expect} rows, got {}",
                local.rows()
            )));
        }
        Ok(Self { grid, layout, rank, global_rows, local })
    }

    pub fn grid(&self) -> GridTopology {
        self.grid
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn global_rows(&self) -> usize {
        self.global_rows
    }

    pub fn cols(&self) -> usize {
        self.local.cols()
    }

    pub fn local(&self) -> &DenseBlock {
        &self.local
    }

    pub fn into_local(self) -> DenseBlock {
        self.local
    }

    pub fn block_index(&self) -> usize {
        self.grid.owned_block(self.rank, self.layout)
    }

    /// Global rows held here.
    pub fn row_range(&self) -> Range<usize> {
        block_range(self.global_rows, self.grid.p(), self.block_index())
    }

    /// Same metadata, different local columns.
    pub fn with_local(&self, local: DenseBlock) -> Result<Self> {
        Self::from_local(self.grid, self.layout, self.rank, self.global_rows, local)
    }

    /// Reinterprets the block on the transposed grid. The rows held stay
    /// put; only the layout tag flips.
    pub fn transpose_grid(self) -> Self {
        Self {
            grid: self.grid.transposed(),
            layout: self.layout.flipped(),
            ..self
        }
    }

    fn check_compatible(&self, other: &DistDense1D) -> Result<()> {
        if self.layout != other.layout || self.grid != other.grid {
            return Err(Error::LayoutMismatch(format!(
                "{:?} block on {:?} combined with {:?} block on {:?}",
                self.layout, self.grid, other.layout, other.grid
            )));
        }
        if self.global_rows != other.global_rows || self.rank != other.rank {
            return Err(Error::DimensionMismatch("blocks of different matrices".into()));
        }
        Ok(())
    }

    /// Elementwise `f(self, other)`; both must share grid and layout.
    pub fn zip_map(&self, other: &DistDense1D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        self.with_local(self.local.zip_map(&other.local, f)?)
    }

    /// Elementwise `f(self, b, c)`; all three must share grid and layout.
    pub fn zip3_map(&self, b: &DistDense1D, c: &DistDense1D, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(b)?;
        self.check_compatible(c)?;
        self.with_local(self.local.zip3_map(&b.local, &c.local, f)?)
    }
}

/// This rank's block of `v` under `layout`.
pub fn distribute_dense(v: &DenseBlock, grid: GridTopology, layout: Layout, rank: usize) -> Result<DistDense1D> {
    let rows = block_range(v.rows(), grid.p(), grid.owned_block(rank, layout));
    DistDense1D::from_local(grid, layout, rank, v.rows(), v.row_range(rows))
}

/// Reassembles the full matrix on every rank.
pub fn collect_dense(comm: &mut Comm, dv: &DistDense1D) -> Result<DenseBlock> {
    let grid = dv.grid;
    let (n, p, k) = (dv.global_rows, grid.p(), dv.cols());
    let pad = max_block_rows(n, p);
    let gathered = comm.allgather(&grid.world(), dv.local.resized_rows(pad).data())?;
    let mut blocks = Vec::with_capacity(p);
    for b in 0..p {
        let owner = grid.block_owner(b, dv.layout);
        let chunk = &gathered[owner * pad * k..(owner + 1) * pad * k];
        let padded = DenseBlock::from_col_major(pad, k, chunk.to_vec())?;
        blocks.push(padded.row_range(0..block_range(n, p, b).len()));
    }
    DenseBlock::vcat(&blocks)
}

/// `A·V` with `V` in V-layout; the result is in U-layout on the same grid.
///
/// When `v` lives on the transpose of `a`'s grid, each process holds
/// `A[j, i]ᵀ` in the role of `A[i, j]`, which equals the needed tile because
/// `A` is symmetric.
pub fn spmm_15d(comm: &mut Comm, a: &DistSparse2D, v: &DistDense1D) -> Result<DistDense1D> {
    if v.layout != Layout::V {
        return Err(Error::LayoutMismatch("spmm_15d needs its input in V-layout".into()));
    }
    let transposed = if v.grid == a.grid {
        false
    } else if v.grid == a.grid.transposed() {
        true
    } else {
        return Err(Error::LayoutMismatch("vector and matrix live on different grids".into()));
    };
    if v.rank != a.rank || v.global_rows != a.global_n {
        return Err(Error::DimensionMismatch("vector does not match the matrix".into()));
    }
    let grid = v.grid;
    let (n, p, q, k) = (a.global_n, grid.p(), grid.q(), v.cols());
    let (i, j) = grid.coords_of(v.rank);
    let pad = max_block_rows(n, p);

    // gather the q blocks of tile column j down the grid column
    let gathered = comm.allgather(&grid.col_comm(j)?, v.local.resized_rows(pad).data())?;
    let mut blocks = Vec::with_capacity(q);
    for l in 0..q {
        let chunk = &gathered[l * pad * k..(l + 1) * pad * k];
        let padded = DenseBlock::from_col_major(pad, k, chunk.to_vec())?;
        blocks.push(padded.row_range(0..block_range(n, p, j * q + l).len()));
    }
    let x = DenseBlock::vcat(&blocks)?;

    let y = match (a.kind, transposed) {
        (TileKind::Operator, false) => a.tile.mul_dense(&x)?,
        (TileKind::Operator, true) => a.tile.transpose_mul_dense(&x)?,
        (TileKind::Identity, t) => a.tile.scatter_pattern(&x, t)?,
    };
    if a.kind == TileKind::Operator {
        comm.add_flops(2 * a.tile.nnz() as u64 * k as u64);
    }

    // split the partial product of tile row i into its q blocks, padded
    let mut payload = Vec::with_capacity(q * pad * k);
    let mut offset = 0;
    for l in 0..q {
        let len = block_range(n, p, i * q + l).len();
        payload.extend_from_slice(y.row_range(offset..offset + len).resized_rows(pad).data());
        offset += len;
    }
    let mine = comm.reduce_scatter(&grid.row_comm(i)?, &payload)?;
    let rows = block_range(n, p, i * q + j).len();
    let local = DenseBlock::from_col_major(pad, k, mine)?.row_range(0..rows);
    DistDense1D::from_local(grid, Layout::U, v.rank, n, local)
}

/// Moves a U-layout block back to V-layout: transpose the grid (now V-layout
/// on the transposed grid), multiply by the distributed identity, and
/// transpose back.
pub fn redistribute_u_to_v(comm: &mut Comm, ident: &DistSparse2D, u: DistDense1D) -> Result<DistDense1D> {
    if u.layout != Layout::U {
        return Err(Error::LayoutMismatch("redistribution expects a U-layout block".into()));
    }
    if ident.kind != TileKind::Identity {
        return Err(Error::LayoutMismatch("redistribution needs the distributed identity".into()));
    }
    let moved = spmm_15d(comm, ident, &u.transpose_grid())?;
    Ok(moved.transpose_grid())
}

/// `A·v` kept in V-layout, with the two SpMMs booked under separate phases.
pub fn apply_in_v_layout(comm: &mut Comm, a: &DistSparse2D, ident: &DistSparse2D, v: &DistDense1D) -> Result<DistDense1D> {
    let outer = comm.phase();
    let (spmm_phase, move_phase) = if outer == Phase::FilterSpmm {
        (Phase::FilterSpmm, Phase::FilterRedistribute)
    } else {
        (outer, outer)
    };
    comm.set_phase(spmm_phase);
    let u = spmm_15d(comm, a, v);
    comm.set_phase(move_phase);
    let out = u.and_then(|u| redistribute_u_to_v(comm, ident, u));
    comm.set_phase(outer);
    out
}

struct DistSpace<'a> {
    comm: &'a mut Comm,
    a: &'a DistSparse2D,
    ident: &'a DistSparse2D,
}

impl FilterSpace for DistSpace<'_> {
    type Block = DistDense1D;

    fn apply(&mut self, x: &DistDense1D) -> Result<DistDense1D> {
        apply_in_v_layout(self.comm, self.a, self.ident, x)
    }

    fn combine2(&mut self, a: &DistDense1D, b: &DistDense1D, f: impl Fn(f64, f64) -> f64) -> Result<DistDense1D> {
        a.zip_map(b, f)
    }

    fn combine3(
        &mut self,
        a: &DistDense1D,
        b: &DistDense1D,
        c: &DistDense1D,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<DistDense1D> {
        a.zip3_map(b, c, f)
    }
}

/// Degree-`m` Chebyshev filter of the V-layout block `v`. Every degree costs
/// one `A`-SpMM (phase `FilterSpmm`) and one identity SpMM (phase
/// `FilterRedistribute`).
pub fn dist_chebyshev_filter(
    comm: &mut Comm,
    a: &DistSparse2D,
    ident: &DistSparse2D,
    v: &DistDense1D,
    m: usize,
    bounds: &FilterBounds,
) -> Result<DistDense1D> {
    if v.layout != Layout::V {
        return Err(Error::LayoutMismatch("filter input must be in V-layout".into()));
    }
    let outer = comm.set_phase(Phase::FilterSpmm);
    let out = chebyshev_recurrence(&mut DistSpace { comm, a, ident }, v, bounds, m);
    comm.set_phase(outer);
    out
}

/// Replicated `aᵀ·b`: local products summed over the grid row, then the
/// grid column, in the fixed tree order.
pub fn gram(comm: &mut Comm, a: &DistDense1D, b: &DistDense1D) -> Result<DenseBlock> {
    a.check_compatible(b)?;
    let local = a.local.t_matmul(&b.local)?;
    comm.add_flops(2 * (a.local.rows() * a.cols() * b.cols()) as u64);
    let summed = sum_over_grid(comm, a.grid, a.rank, local.data())?;
    DenseBlock::from_col_major(a.cols(), b.cols(), summed)
}

/// Global 2-norm of every column.
pub fn column_norms(comm: &mut Comm, a: &DistDense1D) -> Result<Vec<f64>> {
    let local = a.local.column_sq_norms();
    comm.add_flops(2 * (a.local.rows() * a.cols()) as u64);
    let summed = sum_over_grid(comm, a.grid, a.rank, &local)?;
    Ok(summed.into_iter().map(libm::sqrt).collect())
}

fn sum_over_grid(comm: &mut Comm, grid: GridTopology, rank: usize, local: &[f64]) -> Result<Vec<f64>> {
    let (i, j) = grid.coords_of(rank);
    let row = comm.allreduce(&grid.row_comm(i)?, local)?;
    Ok(comm.allreduce(&grid.col_comm(j)?, &row)?)
}
