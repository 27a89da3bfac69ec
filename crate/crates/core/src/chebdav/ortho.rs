use alloc::vec::Vec;

use rand::Rng;

use crate::dense::{dot, DenseBlock};
use crate::{Error, Result};

/// Reorthogonalize when a projection keeps less than this fraction of norm.
const DGKS_ETA: f64 = core::f64::consts::FRAC_1_SQRT_2;
/// A column whose norm falls below this fraction of its input norm is
/// treated as linearly dependent and replaced.
const DEPENDENT: f64 = 1e-10;
const MAX_REPLACEMENTS: usize = 8;

/// Orthonormalizes the columns of `v_new` against the orthonormal columns
/// of `v_locked` and against each other, column by column, with the DGKS
/// reorthogonalization criterion. Columns that turn out numerically
/// dependent are replaced by uniform(−1, 1) vectors drawn from `rng`.
pub fn dgks_orthonormalize(v_new: &DenseBlock, v_locked: &DenseBlock, rng: &mut impl Rng) -> Result<DenseBlock> {
    let n = v_new.rows();
    if v_locked.rows() != n {
        return Err(Error::DimensionMismatch("basis and new block differ in rows".into()));
    }
    let basis: Vec<&[f64]> = (0..v_locked.cols()).map(|j| v_locked.col(j)).collect();
    let mut out = DenseBlock::zeros(n, v_new.cols());
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(v_new.cols());
    for j in 0..v_new.cols() {
        let mut x = v_new.col(j).to_vec();
        let mut ok = false;
        for _ in 0..=MAX_REPLACEMENTS {
            if orthogonalize(&mut x, &basis, &accepted) {
                ok = true;
                break;
            }
            x.iter_mut().for_each(|e| *e = 2.0 * rng.random::<f64>() - 1.0);
        }
        if !ok {
            return Err(Error::RetryLimit(MAX_REPLACEMENTS));
        }
        accepted.push(x);
    }
    for (j, x) in accepted.iter().enumerate() {
        out.col_mut(j).copy_from_slice(x);
    }
    Ok(out)
}

/// Projects `x` off `locked` and `fresh` (classical Gram-Schmidt, repeated
/// while the DGKS test asks for it) and normalizes it. Returns `false` when
/// `x` is numerically in their span.
fn orthogonalize(x: &mut [f64], locked: &[&[f64]], fresh: &[Vec<f64>]) -> bool {
    let original = libm::sqrt(dot(x, x));
    if original == 0.0 || !original.is_finite() {
        return false;
    }
    let mut norm = original;
    let mut settled = false;
    for _ in 0..3 {
        let coeffs: Vec<f64> = locked
            .iter()
            .copied()
            .chain(fresh.iter().map(|q| q.as_slice()))
            .map(|q| dot(q, x))
            .collect();
        for (q, c) in locked.iter().copied().chain(fresh.iter().map(|q| q.as_slice())).zip(coeffs) {
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= c * qi;
            }
        }
        let after = libm::sqrt(dot(x, x));
        let kept = after > DGKS_ETA * norm;
        norm = after;
        if kept {
            settled = true;
            break;
        }
    }
    if !settled || norm <= DEPENDENT * original {
        return false;
    }
    x.iter_mut().for_each(|e| *e /= norm);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn gram_error(q: &DenseBlock) -> f64 {
        let g = q.t_matmul(q).unwrap();
        g.max_abs_diff(&DenseBlock::identity(q.cols()))
    }

    #[test]
    fn normalizes_single_column() {
        let mut v = DenseBlock::zeros(3, 1);
        v.set(0, 0, 2.0);
        let q = dgks_orthonormalize(&v, &DenseBlock::zeros(3, 0), &mut stream_rng(0, 0)).unwrap();
        assert_eq!(q.col(0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn replaces_dependent_columns() {
        let locked = dgks_orthonormalize(&crate::uniform_matrix(20, 4, 1, 0), &DenseBlock::zeros(20, 0), &mut stream_rng(1, 1)).unwrap();
        let inside = locked.matmul(&crate::uniform_matrix(4, 2, 2, 0)).unwrap();
        let q = dgks_orthonormalize(&inside, &locked, &mut stream_rng(3, 0)).unwrap();
        let proj = locked.t_matmul(&q).unwrap();
        assert!(proj.data().iter().all(|x| x.abs() <= 1e-10));
        assert!(gram_error(&q) < 1e-12);
    }

    #[test]
    fn combined_basis_is_orthonormal() {
        let mut rng = stream_rng(7, 0);
        let locked = dgks_orthonormalize(&crate::uniform_matrix(50, 10, 5, 0), &DenseBlock::zeros(50, 0), &mut rng).unwrap();
        let q = dgks_orthonormalize(&crate::uniform_matrix(50, 5, 6, 0), &locked, &mut rng).unwrap();
        assert!(gram_error(&locked.hcat(&q).unwrap()) <= 1e-12);
    }

    #[test]
    fn full_space_cannot_be_extended() {
        let locked = DenseBlock::identity(3);
        let r = dgks_orthonormalize(&crate::uniform_matrix(3, 1, 0, 0), &locked, &mut stream_rng(0, 0));
        assert_eq!(r, Err(Error::RetryLimit(MAX_REPLACEMENTS)));
    }
}
