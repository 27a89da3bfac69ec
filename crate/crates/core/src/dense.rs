//! Column-major dense blocks and the small dense kernels the solvers need:
//! products, Householder QR and a cyclic Jacobi symmetric eigensolver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result};

/// A dense `rows × cols` matrix stored column by column.
///
/// Used for the tall-skinny bases (`V`, `W`, filtered blocks) as well as the
/// small replicated matrices of the Rayleigh-Ritz step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} block needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a block from row slices; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), ncols, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies the columns in `range` into a new block.
    pub fn columns(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols, "column range out of bounds");
        Self {
            rows: self.rows,
            cols: range.len(),
            data: self.data[range.start * self.rows..range.end * self.rows].to_vec(),
        }
    }

    /// Overwrites columns `start..start + src.cols()` with `src`.
    pub fn set_columns(&mut self, start: usize, src: &DenseBlock) {
        assert_eq!(self.rows, src.rows, "row count mismatch in set_columns");
        assert!(start + src.cols <= self.cols, "column range out of bounds");
        self.data[start * self.rows..(start + src.cols) * self.rows].copy_from_slice(&src.data);
    }

    /// Copies the rows in `range` into a new block.
    pub fn row_range(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.rows, "row range out of bounds");
        Self::from_fn(range.len(), self.cols, |i, j| self.get(range.start + i, j))
    }

    /// Returns a copy with `rows` rows: extra rows are zero, surplus rows dropped.
    pub fn resized_rows(&self, rows: usize) -> Self {
        Self::from_fn(rows, self.cols, |i, j| if i < self.rows { self.get(i, j) } else { 0.0 })
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &DenseBlock) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "hcat of {} and {} rows",
                self.rows, other.rows
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    /// Vertical concatenation of blocks sharing a column count.
    pub fn vcat(blocks: &[DenseBlock]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::DimensionMismatch("vcat of blocks with different widths".into()));
        }
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            for j in 0..cols {
                out.col_mut(j)[offset..offset + b.rows].copy_from_slice(b.col(j));
            }
            offset += b.rows;
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &DenseBlock) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for l in 0..self.cols {
                let s = rhs.get(l, j);
                if s == 0.0 {
                    continue;
                }
                let ac = &self.data[l * self.rows..(l + 1) * self.rows];
                for (o, a) in oc.iter_mut().zip(ac) {
                    *o += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, every entry a plain left-to-right dot product.
    pub fn t_matmul(&self, rhs: &DenseBlock) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "transpose product of {} and {} rows",
                self.rows, rhs.rows
            )));
        }
        Ok(Self::from_fn(self.cols, rhs.cols, |i, j| dot(self.col(i), rhs.col(j))))
    }

    /// Elementwise `f(self, other)`.
    pub fn zip_map(&self, other: &DenseBlock, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise `f(self, b, c)`.
    pub fn zip3_map(
        &self,
        b: &DenseBlock,
        c: &DenseBlock,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        self.check_same_shape(b)?;
        self.check_same_shape(c)?;
        let data = self
            .data
            .iter()
            .zip(&b.data)
            .zip(&c.data)
            .map(|((&x, &y), &z)| f(x, y, z))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn check_same_shape(&self, other: &DenseBlock) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn column_sq_norms(&self) -> Vec<f64> {
        (0..self.cols).map(|j| dot(self.col(j), self.col(j))).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(dot(&self.data, &self.data))
    }

    /// Largest absolute entry of `self − other`.
    pub fn max_abs_diff(&self, other: &DenseBlock) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, libm::fabs(a - b)))
    }

    /// Permutes columns: column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, perm.len());
        for (j, &src) in perm.iter().enumerate() {
            out.col_mut(j).copy_from_slice(self.col(src));
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Thin Householder QR of a `m × n` block with `m ≥ n`.
///
/// With `nonneg_diag` the signs are fixed so that `diag(R) ≥ 0`, which makes
/// the factorization unique for full-rank input.
pub fn householder_qr(a: &DenseBlock, nonneg_diag: bool) -> Result<(DenseBlock, DenseBlock)> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "thin QR needs rows >= cols, got {m}x{n}"
        )));
    }
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &work.col(k)[k..];
        let xnorm = libm::sqrt(dot(x, x));
        if xnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for j in k..n {
            let c = &mut work.col_mut(j)[k..];
            let s = 2.0 * dot(&v, c) / vnorm2;
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= s * vi;
            }
        }
        // exact zeros below the diagonal
        work.col_mut(k)[k] = alpha;
        for i in k + 1..m {
            work.col_mut(k)[i] = 0.0;
        }
        reflectors.push(v);
    }
    let mut r = DenseBlock::from_fn(n, n, |i, j| if i <= j { work.get(i, j) } else { 0.0 });
    let mut q = DenseBlock::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let vnorm2 = dot(v, v);
        for j in 0..n {
            let c = &mut q.col_mut(j)[k..];
            let s = 2.0 * dot(v, c) / vnorm2;
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci -= s * vi;
            }
        }
    }
    if nonneg_diag {
        for j in 0..n {
            if r.get(j, j) < 0.0 {
                for c in j..n {
                    r.set(j, c, -r.get(j, c));
                }
                for x in q.col_mut(j) {
                    *x = -*x;
                }
            }
        }
    }
    Ok((q, r))
}

/// Eigenpairs of a small symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: DenseBlock,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back ascending; ties keep their diagonal order so the
/// result is a deterministic function of the input bits.
pub fn symmetric_eigen(h: &DenseBlock) -> Result<SymmetricEigen> {
    let n = h.rows();
    if h.cols() != n {
        return Err(Error::EigenFailure(format!("matrix is {}x{}", n, h.cols())));
    }
    if !h.is_finite() {
        return Err(Error::EigenFailure("non-finite entries".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if h.get(i, j) != h.get(j, i) {
                return Err(Error::EigenFailure(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    let mut a = h.clone();
    let mut v = DenseBlock::identity(n);
    let scale = a.frobenius_norm();
    let mut converged = n < 2 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..j {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if libm::sqrt(2.0 * off) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenFailure("Jacobi sweeps did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.get(x, x).total_cmp(&a.get(y, y)).then(x.cmp(&y)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    Ok(SymmetricEigen {
        values,
        vectors: v.permute_columns(&order),
    })
}
