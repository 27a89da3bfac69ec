use crate::dense::DenseBlock;
use crate::graph::CsrMatrix;
use crate::{Error, Result};

/// Spectrum bounds for the filter: `[cut, upper]` is damped into `[−1, 1]`
/// and `[lower, cut)` is amplified, most strongly at `lower`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBounds {
    /// Lower bound of the whole spectrum.
    pub lower: f64,
    /// Lower bound of the unwanted eigenvalues.
    pub cut: f64,
    /// Upper bound of the whole spectrum.
    pub upper: f64,
}

impl FilterBounds {
    pub fn new(lower: f64, cut: f64, upper: f64) -> Result<Self> {
        let b = Self { lower, cut, upper };
        b.validate()?;
        Ok(b)
    }

    /// Bounds for a normalized Laplacian (`[0, 2]`) with the cut guessed
    /// from the fraction of wanted eigenvalues.
    pub fn laplacian_default(k_want: usize, n: usize) -> Self {
        let (lower, upper) = (0.0, 2.0);
        Self {
            lower,
            cut: lower + (upper - lower) * k_want as f64 / n as f64,
            upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self { lower, cut, upper } = *self;
        let finite = lower.is_finite() && cut.is_finite() && upper.is_finite();
        if !(finite && lower < cut && cut < upper) {
            return Err(Error::DegenerateBounds { lower, cut, upper });
        }
        Ok(())
    }

    /// Centre and half-width of `[cut, upper]`.
    pub fn centre_halfwidth(&self) -> (f64, f64) {
        ((self.cut + self.upper) / 2.0, (self.upper - self.cut) / 2.0)
    }

    /// Gain the degree-`m` filter applies to eigenvalue `lambda`:
    /// `C_m((λ − c)/e) / C_m((lower − c)/e)`.
    pub fn gain(&self, m: usize, lambda: f64) -> f64 {
        let (c, e) = self.centre_halfwidth();
        cheb_scalar(m, (lambda - c) / e) / cheb_scalar(m, (self.lower - c) / e)
    }
}

/// Chebyshev polynomial of the first kind, `C_m(x)`.
pub fn cheb_scalar(m: usize, x: f64) -> f64 {
    let mf = m as f64;
    if libm::fabs(x) <= 1.0 {
        libm::cos(mf * libm::acos(x))
    } else if x > 1.0 {
        libm::cosh(mf * libm::acosh(x))
    } else {
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * libm::cosh(mf * libm::acosh(-x))
    }
}

/// Where the filter recurrence runs: applying the operator and combining
/// blocks elementwise. Implementations must reject combinations of blocks
/// that are not laid out identically.
pub trait FilterSpace {
    type Block;

    fn apply(&mut self, x: &Self::Block) -> Result<Self::Block>;

    fn combine2(&mut self, a: &Self::Block, b: &Self::Block, f: impl Fn(f64, f64) -> f64) -> Result<Self::Block>;

    fn combine3(
        &mut self,
        a: &Self::Block,
        b: &Self::Block,
        c: &Self::Block,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self::Block>;
}

/// Scaled three-term recurrence producing
/// `C_m((A − c)/e) · v / C_m((lower − c)/e)`; `m = 1` returns the first
/// scaled step alone.
pub fn chebyshev_recurrence<S: FilterSpace>(
    space: &mut S,
    v: &S::Block,
    bounds: &FilterBounds,
    m: usize,
) -> Result<S::Block> {
    bounds.validate()?;
    if m == 0 {
        return Err(Error::InvalidConfig("filter degree must be at least 1".into()));
    }
    let (c, e) = bounds.centre_halfwidth();
    let mut sigma = e / (bounds.lower - c);
    let tau = 2.0 / sigma;
    let s = sigma / e;
    let av = space.apply(v)?;
    let mut u = space.combine2(&av, v, |x, y| (x - c * y) * s)?;
    let mut prev: Option<S::Block> = None;
    for _ in 2..=m {
        let sigma1 = 1.0 / (tau - sigma);
        let (a1, b1) = (2.0 * sigma1 / e, sigma * sigma1);
        let au = space.apply(&u)?;
        let vp = prev.as_ref().unwrap_or(v);
        let w = space.combine3(&au, &u, vp, |x, y, z| a1 * (x - c * y) - b1 * z)?;
        prev = Some(core::mem::replace(&mut u, w));
        sigma = sigma1;
    }
    Ok(u)
}

struct SerialSpace<'a>(&'a CsrMatrix);

impl FilterSpace for SerialSpace<'_> {
    type Block = DenseBlock;

    fn apply(&mut self, x: &DenseBlock) -> Result<DenseBlock> {
        self.0.mul_dense(x)
    }

    fn combine2(&mut self, a: &DenseBlock, b: &DenseBlock, f: impl Fn(f64, f64) -> f64) -> Result<DenseBlock> {
        a.zip_map(b, f)
    }

    fn combine3(
        &mut self,
        a: &DenseBlock,
        b: &DenseBlock,
        c: &DenseBlock,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<DenseBlock> {
        a.zip3_map(b, c, f)
    }
}

/// Degree-`m` Chebyshev filter of the block `v`.
pub fn chebyshev_filter(a: &CsrMatrix, v: &DenseBlock, bounds: &FilterBounds, m: usize) -> Result<DenseBlock> {
    chebyshev_recurrence(&mut SerialSpace(a), v, bounds, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_sbm, normalized_laplacian};
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    #[test]
    fn scalar_values() {
        for x in [-3.0, -0.3, 0.0, 0.7, 5.0] {
            assert_eq!(cheb_scalar(0, x), 1.0);
        }
        assert!((cheb_scalar(2, 0.5) + 0.5).abs() < 1e-15);
        assert!((cheb_scalar(3, 2.0) - 26.0).abs() < 1e-12);
        assert!((cheb_scalar(3, -2.0) + 26.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scalar_matches_recurrence(m in 0usize..20, x in -3.0f64..3.0) {
            let (mut c0, mut c1) = (1.0, x);
            let r = match m {
                0 => 1.0,
                _ => {
                    for _ in 1..m {
                        (c0, c1) = (c1, 2.0 * x * c1 - c0);
                    }
                    c1
                }
            };
            prop_assert!((cheb_scalar(m, x) - r).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(FilterBounds::new(0.0, 1.0, 2.0).is_ok());
        assert!(FilterBounds::new(1.0, 1.0, 2.0).is_err());
        assert!(FilterBounds::new(0.0, 2.0, 2.0).is_err());
        assert!(FilterBounds::new(0.0, f64::NAN, 2.0).is_err());
        let a = CsrMatrix::identity(2);
        let bad = FilterBounds { lower: 1.5, cut: 1.0, upper: 2.0 };
        assert!(matches!(
            chebyshev_filter(&a, &DenseBlock::identity(2), &bad, 3),
            Err(Error::DegenerateBounds { .. })
        ));
    }

    #[test]
    fn diagonal_gains() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 0.1), (1, 1, 1.9)]).unwrap();
        let b = FilterBounds::new(0.0, 1.0, 2.0).unwrap();
        let out = chebyshev_filter(&a, &DenseBlock::identity(2), &b, 8).unwrap();
        let g = [b.gain(8, 0.1), b.gain(8, 1.9)];
        assert!((out.get(0, 0) - g[0]).abs() < 1e-14 * g[0].abs());
        assert!((out.get(1, 1) - g[1]).abs() < 1e-14);
        assert_eq!(out.get(0, 1), 0.0);
        // the wanted direction dominates the damped one by C_8 of the mapped point
        let (c, e) = b.centre_halfwidth();
        assert!((g[0] / g[1]).abs() >= cheb_scalar(8, (0.1 - c) / e).abs() * 0.999);
        assert!(g[1].abs() <= 1.0 / cheb_scalar(8, (0.0 - c) / e).abs() + 1e-15);
    }

    #[test]
    fn degree_one_is_first_step() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 0.5), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 1.5)]).unwrap();
        let b = FilterBounds::new(0.0, 0.8, 2.0).unwrap();
        let v = DenseBlock::from_rows(&[&[1.0, 2.0], &[-1.0, 0.5]]);
        let (c, e) = b.centre_halfwidth();
        let sigma = e / (b.lower - c);
        let av = a.mul_dense(&v).unwrap();
        let expect = av.zip_map(&v, |x, y| (x - c * y) * (sigma / e)).unwrap();
        assert_eq!(chebyshev_filter(&a, &v, &b, 1).unwrap(), expect);
        assert!(chebyshev_filter(&a, &v, &b, 0).is_err());
    }

    /// `V·φ(Λ)·Vᵀ·x` from a dense eigendecomposition.
    fn spectral_oracle(a: &CsrMatrix, x: &DenseBlock, phi: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = a.n();
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let eig = SymmetricEigen::new(dense);
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(phi));
        let xm = DMatrix::from_fn(n, x.cols(), |i, j| x.get(i, j));
        &eig.eigenvectors * d * eig.eigenvectors.transpose() * xm
    }

    #[test]
    fn matches_spectral_oracle() {
        let (g, _) = gen_sbm(80, 4, 0.3, 0.05, 3).unwrap();
        let a = normalized_laplacian(&g);
        let x = crate::uniform_matrix(80, 3, 1, 0);
        for (m, cut) in [(2, 0.3), (5, 0.5), (11, 0.2), (15, 0.4)] {
            let b = FilterBounds::new(0.0, cut, 2.0).unwrap();
            let got = chebyshev_filter(&a, &x, &b, m).unwrap();
            let want = spectral_oracle(&a, &x, |l| b.gain(m, l));
            let scale = want.norm();
            let err = (0..80)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| (got.get(i, j) - want[(i, j)]).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10 * scale.max(1.0), "m={m}: {err}");
        }
    }
}
