//! Sequential Block Chebyshev-Davidson solver for the smallest eigenpairs
//! of a sparse symmetric matrix.
//!
//! The driver in [`solver`] is written once against [`SolverBackend`]; the
//! serial backend here and the distributed one in `dist_chebdav` differ only
//! in how blocks are multiplied, reduced and orthonormalized.

mod filter;
mod ortho;
mod solver;
pub(crate) use solver::ORTHO_STREAM_BASE;

use alloc::format;

pub use self::filter::{cheb_scalar, chebyshev_filter, chebyshev_recurrence, FilterBounds, FilterSpace};
pub use self::ortho::dgks_orthonormalize;
pub use self::solver::{bchdav_solve, solve_with, EigResult, SerialBackend, SolverBackend, SolverState};
use crate::{Error, Result};

/// How freshly filtered blocks are orthonormalized against the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrthoMethod {
    /// Column-by-column classical Gram-Schmidt with DGKS reorthogonalization.
    #[default]
    Dgks,
    /// Two-pass block Gram-Schmidt followed by tall-skinny QR, the scheme
    /// the distributed solver uses.
    BlockCgsTsqr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub k_want: usize,
    pub k_b: usize,
    /// Chebyshev filter degree.
    pub m: usize,
    pub act_max: usize,
    pub dim_max: usize,
    pub k_ri: usize,
    pub tol: f64,
    pub itmax: usize,
    pub seed: u64,
    pub ortho: OrthoMethod,
}

impl SolverConfig {
    /// Configuration with the standard derived sizes:
    /// `act_max = max(5k_b, 30)`, `dim_max = max(act_max + 2k_b, k_want + 30)`,
    /// `k_ri = max(⌊act_max/2⌋, act_max − 3k_b)`.
    pub fn new(k_want: usize, k_b: usize, m: usize) -> Self {
        let act_max = (5 * k_b).max(30);
        let dim_max = (act_max + 2 * k_b).max(k_want + 30);
        let k_ri = (act_max / 2).max(act_max.saturating_sub(3 * k_b));
        Self {
            k_want,
            k_b,
            m,
            act_max,
            dim_max,
            k_ri,
            tol: 1e-8,
            itmax: 500,
            seed: 0,
            ortho: OrthoMethod::default(),
        }
    }

    /// Outer-restart target `dim_max − 2k_b − k_c`, kept within `[1, k_act]`.
    pub fn k_ro(&self, k_c: usize, k_act: usize) -> usize {
        (self.dim_max as isize - 2 * self.k_b as isize - k_c as isize).clamp(1, k_act.max(1) as isize) as usize
    }

    /// Shrinks the subspace limits to fit an `n`-dimensional problem and
    /// checks `2k_b ≤ act_max ≤ dim_max ≤ n`, `k_b ≤ k_ri ≤ act_max − k_b`
    /// and `k_want + 2k_b ≤ dim_max`. Only `dim_max`, `act_max`, `k_ri` and,
    /// for tiny `n`, `k_b` are adjusted; everything else is checked as given.
    pub fn fit_to(&self, n: usize) -> Result<Self> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if n < 2 {
            return bad(format!("problem dimension {n} is too small"));
        }
        if self.k_want == 0 || self.k_want >= n {
            return bad(format!("k_want={} must lie in 1..{n}", self.k_want));
        }
        if self.k_b == 0 {
            return bad("k_b must be positive".into());
        }
        if self.m < 2 {
            return bad(format!("filter degree {} must be at least 2", self.m));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad(format!("tolerance {} must be finite and non-negative", self.tol));
        }
        let mut c = self.clone();
        c.dim_max = c.dim_max.min(n);
        if c.k_want + 2 * c.k_b > c.dim_max {
            c.k_b = (c.dim_max - c.k_want) / 2;
            if c.k_b == 0 {
                return bad(format!("dim_max={} leaves no room for a block beyond k_want={}", c.dim_max, c.k_want));
            }
        }
        c.act_max = c.act_max.min(c.dim_max);
        if c.act_max < 2 * c.k_b {
            return bad(format!("act_max={} must be at least 2·k_b={}", c.act_max, 2 * c.k_b));
        }
        c.k_ri = c.k_ri.clamp(c.k_b, c.act_max - c.k_b);
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let c = SolverConfig::new(16, 4, 11);
        assert_eq!((c.act_max, c.dim_max, c.k_ri), (30, 46, 18));
        let big = SolverConfig::new(100, 8, 11);
        assert_eq!((big.act_max, big.dim_max, big.k_ri), (40, 130, 20));
    }

    #[test]
    fn fits_small_problems() {
        let c = SolverConfig::new(1, 4, 11).fit_to(3).unwrap();
        assert_eq!((c.k_b, c.act_max, c.dim_max, c.k_ri), (1, 3, 3, 2));
        let c = SolverConfig::new(16, 4, 11).fit_to(500).unwrap();
        assert_eq!(c, SolverConfig::new(16, 4, 11));
        assert!(SolverConfig::new(3, 4, 11).fit_to(3).is_err());
        assert!(SolverConfig::new(1, 1, 1).fit_to(10).is_err());
    }

    #[test]
    fn outer_restart_size() {
        let mut c = SolverConfig::new(16, 4, 11);
        c.dim_max = 60;
        assert_eq!(c.k_ro(10, 48), 42);
    }
}
