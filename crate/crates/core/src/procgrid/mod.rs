//! The √p×√p process grid, the collectives the solver uses, and α-β cost
//! accounting for every collective call.
//!
//! Naming follows the usual convention for 1.5D kernels: `P(i, j)` is the
//! process in grid row `i`, column `j`, and it is the same process as the
//! 1D rank `j·q + i`. Transposing the grid swaps the roles of `i` and `j`
//! without moving any data.

mod comm;
mod counters;
mod transport;

use alloc::vec::Vec;
use core::ops::Range;

pub use self::comm::{tree_reduce, Comm};
pub use self::counters::{ceil_log2, Collective, CostCounters, Phase, Tally};
pub use self::transport::{Message, SoloTransport, Transport};
use crate::CommError;

/// Which 1D row-block a rank owns for a tall-skinny matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// `P(i, j)` owns block `j·q + i` (input side of the 1.5D SpMM).
    V,
    /// `P(i, j)` owns block `i·q + j` (output side of the 1.5D SpMM).
    U,
}

impl Layout {
    pub fn flipped(self) -> Self {
        match self {
            Layout::V => Layout::U,
            Layout::U => Layout::V,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridTopology {
    q: usize,
    transposed: bool,
}

impl GridTopology {
    pub fn new(p: usize) -> Result<Self, CommError> {
        let q = isqrt(p);
        if p == 0 || q * q != p {
            return Err(CommError::NonSquareGrid(p));
        }
        Ok(Self { q, transposed: false })
    }

    pub fn p(&self) -> usize {
        self.q * self.q
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Rank of the process at grid position `(i, j)`.
    pub fn rank_of(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.q && j < self.q);
        if self.transposed {
            i * self.q + j
        } else {
            j * self.q + i
        }
    }

    pub fn coords_of(&self, rank: usize) -> (usize, usize) {
        let (a, b) = (rank % self.q, rank / self.q);
        if self.transposed {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// Same processes, roles of grid rows and columns exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            q: self.q,
            transposed: !self.transposed,
        }
    }

    /// Ranks of `P(i, :)` in column order.
    pub fn row_comm(&self, i: usize) -> Result<Vec<usize>, CommError> {
        self.check_index(i)?;
        Ok((0..self.q).map(|j| self.rank_of(i, j)).collect())
    }

    /// Ranks of `P(:, j)` in row order.
    pub fn col_comm(&self, j: usize) -> Result<Vec<usize>, CommError> {
        self.check_index(j)?;
        Ok((0..self.q).map(|i| self.rank_of(i, j)).collect())
    }

    pub fn world(&self) -> Vec<usize> {
        (0..self.p()).collect()
    }

    /// The row block owned by `rank` under `layout`.
    pub fn owned_block(&self, rank: usize, layout: Layout) -> usize {
        let (i, j) = self.coords_of(rank);
        match layout {
            Layout::V => j * self.q + i,
            Layout::U => i * self.q + j,
        }
    }

    /// The rank owning row block `block` under `layout`.
    pub fn block_owner(&self, block: usize, layout: Layout) -> usize {
        let (hi, lo) = (block / self.q, block % self.q);
        match layout {
            Layout::V => self.rank_of(lo, hi),
            Layout::U => self.rank_of(hi, lo),
        }
    }

    fn check_index(&self, index: usize) -> Result<(), CommError> {
        if index >= self.q {
            return Err(CommError::GridIndexOutOfRange { index, q: self.q });
        }
        Ok(())
    }
}

fn isqrt(p: usize) -> usize {
    let mut q = libm::sqrt(p as f64) as usize;
    while q * q > p {
        q -= 1;
    }
    while (q + 1) * (q + 1) <= p {
        q += 1;
    }
    q
}

/// Rows of block `b` when `n` rows are split into `parts` blocks; the first
/// `n mod parts` blocks get one extra row.
pub fn block_range(n: usize, parts: usize, b: usize) -> Range<usize> {
    let base = n / parts;
    let extra = n % parts;
    let start = b * base + b.min(extra);
    let len = base + usize::from(b < extra);
    start..start + len
}

/// Rows covered by the `group`-th run of `width` consecutive blocks of the
/// `parts`-way split; with `parts = p`, `width = q` this is the row (or
/// column) range of 2D tile index `group`.
pub fn coarse_range(n: usize, parts: usize, width: usize, group: usize) -> Range<usize> {
    let first = block_range(n, parts, group * width);
    let last = block_range(n, parts, group * width + width - 1);
    first.start..last.end
}

/// Largest block size of the `parts`-way split.
pub fn max_block_rows(n: usize, parts: usize) -> usize {
    n.div_ceil(parts)
}
