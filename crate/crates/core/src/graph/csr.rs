use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::dense::DenseBlock;
use crate::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 {
            return Err(Error::DimensionMismatch(format!(
                "row_ptr of length {} for {n_rows} rows",
                row_ptr.len()
            )));
        }
        let nnz = row_ptr[n_rows];
        if col_idx.len() != nnz || values.len() != nnz {
            return Err(Error::DimensionMismatch(format!(
                "row_ptr ends at {nnz} but {} columns / {} values given",
                col_idx.len(),
                values.len()
            )));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::DimensionMismatch(format!("row_ptr decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DimensionMismatch(format!(
                    "columns of row {r} not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::DimensionMismatch(format!("column index out of range in row {r}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite value".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from unordered `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::DimensionMismatch(format!(
                "entry ({r},{c}) outside {n_rows}x{n_cols}"
            )));
        }
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dimension of a square matrix.
    pub fn n(&self) -> usize {
        debug_assert_eq!(self.n_rows, self.n_cols);
        self.n_rows
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, &triplets).expect("transpose of a valid matrix")
    }

    /// Exact (bitwise) symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.transpose() == *self
    }

    pub fn to_dense(&self) -> DenseBlock {
        let mut d = DenseBlock::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                d.set(r, c, v);
            }
        }
        d
    }

    /// The block `rows × cols` with indices rebased to zero.
    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows.clone() {
            for (c, v) in self.row(r) {
                if cols.contains(&c) {
                    col_idx.push(c - cols.start);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `self · x`, each output entry accumulated in stored column order.
    pub fn mul_dense(&self, x: &DenseBlock) -> Result<DenseBlock> {
        if x.rows() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} sparse times {}x{} dense",
                self.n_rows,
                self.n_cols,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = DenseBlock::zeros(self.n_rows, x.cols());
        for j in 0..x.cols() {
            let xc = x.col(j);
            let oc = out.col_mut(j);
            for (r, o) in oc.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * xc[self.col_idx[k]];
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x` without forming the transpose.
    pub fn transpose_mul_dense(&self, x: &DenseBlock) -> Result<DenseBlock> {
        if x.rows() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "({}x{})ᵀ sparse times {}x{} dense",
                self.n_rows,
                self.n_cols,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = DenseBlock::zeros(self.n_cols, x.cols());
        for j in 0..x.cols() {
            let xc = x.col(j);
            let oc = out.col_mut(j);
            for (r, &xr) in xc.iter().enumerate() {
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    oc[self.col_idx[k]] += self.values[k] * xr;
                }
            }
        }
        Ok(out)
    }

    /// Moves entries of `x` along the stored pattern without arithmetic:
    /// `out[r] = x[c]` for every stored `(r, c)`. Only meaningful for
    /// permutation-like blocks (at most one entry per row, all ones).
    pub fn scatter_pattern(&self, x: &DenseBlock, transpose: bool) -> Result<DenseBlock> {
        let (in_rows, out_rows) = if transpose {
            (self.n_rows, self.n_cols)
        } else {
            (self.n_cols, self.n_rows)
        };
        if x.rows() != in_rows {
            return Err(Error::DimensionMismatch(format!(
                "pattern move expects {in_rows} rows, got {}",
                x.rows()
            )));
        }
        let mut out = DenseBlock::zeros(out_rows, x.cols());
        for j in 0..x.cols() {
            let xc = x.col(j);
            let oc = out.col_mut(j);
            for r in 0..self.n_rows {
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let c = self.col_idx[k];
                    if transpose {
                        oc[c] = xc[r];
                    } else {
                        oc[r] = xc[c];
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_columns() {
        let err = CsrMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_row_ptr() {
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![0, 1, 3], vec![0, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 0.5)])
            .unwrap();
        assert_eq!(m.row_ptr(), &[0, 1, 3]);
        assert_eq!(m.col_idx(), &[1, 0, 2]);
        assert_eq!(m.values(), &[2.0, 3.0, 1.5]);
    }

    #[test]
    fn transpose_product_matches_explicit_transpose() {
        let m = CsrMatrix::from_triplets(3, 4, &[(0, 3, 1.5), (2, 0, -2.0), (1, 1, 0.25)]).unwrap();
        let x = crate::uniform_matrix(3, 2, 4, 0);
        let a = m.transpose_mul_dense(&x).unwrap();
        let b = m.transpose().mul_dense(&x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn submatrix_rebases_indices() {
        let m = CsrMatrix::from_triplets(4, 4, &[(0, 0, 1.0), (2, 3, 2.0), (3, 2, 3.0)]).unwrap();
        let s = m.submatrix(2..4, 2..4);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 3.0);
        assert_eq!(s.nnz(), 2);
    }
}
