//! Self-check suites run by `chebspectral verify`: every distributed kernel
//! against its sequential or dense reference on small seeded instances.

use chebspectral_core::chebdav::{bchdav_solve, chebyshev_filter, chebyshev_recurrence, FilterBounds, FilterSpace, SolverConfig};
use chebspectral_core::dense::DenseBlock;
use chebspectral_core::dist_spmm::{
    collect_dense, dist_chebyshev_filter, distribute_dense, distribute_sparse, spmm_15d, DistDense1D, DistSparse2D,
};
use chebspectral_core::graph::{gen_sbm, normalized_laplacian, spmm_serial, CsrMatrix, EdgeList};
use chebspectral_core::procgrid::{Comm, GridTopology, Layout};
use chebspectral_core::tsqr::{tsqr_factor, tsqr_form_q, SignConvention, TsqrOptions};
use chebspectral_core::{uniform_matrix, Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::run::{solve, Mode};
use crate::transport::{run_spmd, Scheduler};

/// A deliberately broken mechanism, used to show that the suites notice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// The distributed filter feeds U-layout SpMM output straight into the
    /// recurrence instead of moving it back to V-layout.
    SkipRedistribute,
    /// TSQR keeps raw Householder signs instead of a non-negative `R`
    /// diagonal.
    RawRSigns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

type Outcome = std::result::Result<(), String>;

pub fn to_nalgebra(b: &DenseBlock) -> DMatrix<f64> {
    DMatrix::from_fn(b.rows(), b.cols(), |i, j| b.get(i, j))
}

pub fn dense_eigenvalues(a: &CsrMatrix) -> Vec<f64> {
    let n = a.n();
    let mut ev: Vec<f64> = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| a.get(i, j))).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Reference `R` with a non-negative diagonal.
pub fn reference_r(v: &DenseBlock) -> DMatrix<f64> {
    let mut r = to_nalgebra(v).qr().r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    r
}

/// Largest entrywise difference divided by the largest magnitude in `want`.
pub fn rel_err(got: &DenseBlock, want: &DenseBlock) -> f64 {
    let scale = want.data().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    got.data().iter().zip(want.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sbm(n: usize, seed: u64) -> Result<CsrMatrix> {
    Ok(normalized_laplacian(&gen_sbm(n, 3, 0.3, 0.03, seed)?.0))
}

/// Symmetric sparse matrix with about `density·n²` entries.
pub fn random_symmetric(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let u = uniform_matrix(n, n, seed, 0);
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..=i {
            let x = u.get(i, j);
            if x.abs() < density {
                let val = x / density;
                t.push((i, j, val));
                if i != j {
                    t.push((j, i, val));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Connected components that contain at least one edge, and the number of
/// isolated nodes. An isolated node has an identity row in the Laplacian,
/// so it adds an eigenvalue 1 rather than 0.
pub fn edge_components(g: &EdgeList) -> (usize, usize) {
    let (count, _) = g.connected_components();
    let isolated = g.degrees().iter().filter(|&&d| d == 0).count();
    (count - isolated, isolated)
}

fn laplacian_spectrum(seed: u64) -> Outcome {
    for s in 0..5 {
        let (g, _) = gen_sbm(40, 4, 0.25, 0.01, seed.wrapping_mul(31).wrapping_add(s)).map_err(|e| e.to_string())?;
        let ev = dense_eigenvalues(&normalized_laplacian(&g));
        ensure(ev.iter().all(|l| (-1e-10..=2.0 + 1e-10).contains(l)), || format!("eigenvalue outside [0, 2]: {ev:?}"))?;
        let zeros = ev.iter().filter(|l| l.abs() < 1e-8).count();
        let (components, isolated) = edge_components(&g);
        ensure(zeros == components, || format!("{zeros} zero eigenvalues for {components} components"))?;
        let ones = ev.iter().filter(|l| (*l - 1.0).abs() < 1e-8).count();
        ensure(ones >= isolated, || format!("{isolated} isolated nodes but only {ones} unit eigenvalues"))?;
    }
    Ok(())
}

fn dense_eig(seed: u64) -> Outcome {
    for (n, k) in [(120, 6), (200, 8)] {
        let a = sbm(n, seed).map_err(|e| e.to_string())?;
        let mut cfg = SolverConfig::new(k, 4, 11);
        cfg.seed = seed;
        let r = bchdav_solve(&a, &cfg, None, None).map_err(|e| e.to_string())?;
        let want = dense_eigenvalues(&a);
        let err = r.values.iter().zip(&want).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        ensure(r.converged && err <= 1e-7, || format!("n={n}: eigenvalue error {err:.3e}"))?;
    }
    Ok(())
}

fn spmm(seed: u64) -> Outcome {
    for (case, p) in [1usize, 4, 9, 16].into_iter().enumerate() {
        let n = 45 + 5 * case;
        let a = random_symmetric(n, 0.15, seed ^ case as u64);
        let v = uniform_matrix(n, 3, seed, 1 + case as u64);
        let want = spmm_serial(&a, &v).map_err(|e| e.to_string())?;
        let grid = GridTopology::new(p).map_err(|e| e.to_string())?;
        let got = run_spmd(p, Scheduler::Threaded, |c| -> Result<DenseBlock> {
            let r = c.rank();
            let u = spmm_15d(c, &distribute_sparse(&a, grid, r)?, &distribute_dense(&v, grid, Layout::V, r)?)?;
            collect_dense(c, &u)
        });
        let got = got.into_iter().next().expect("p >= 1").map_err(|e| e.to_string())?;
        let err = rel_err(&got, &want);
        ensure(err <= 1e-13, || format!("p={p}: relative error {err:.3e}"))?;
    }
    Ok(())
}

fn tsqr(seed: u64, fault: Fault) -> Outcome {
    let signs = if fault == Fault::RawRSigns { SignConvention::Raw } else { SignConvention::NonNegativeDiagonal };
    let opts = TsqrOptions { signs, ..Default::default() };
    for (case, (p, n, k)) in [(4, 40, 4), (9, 90, 6), (16, 64, 3)].into_iter().enumerate() {
        let v = uniform_matrix(n, k, seed, 100 + case as u64);
        let grid = GridTopology::new(p).map_err(|e| e.to_string())?;
        let out = run_spmd(p, Scheduler::Threaded, |c| -> Result<(DenseBlock, DenseBlock)> {
            let dv = distribute_dense(&v, grid, Layout::V, c.rank())?;
            let (tree, r) = tsqr_factor(c, &dv, &opts)?;
            let q = collect_dense(c, &tsqr_form_q(&tree)?)?;
            Ok((r, q))
        });
        let (r, q) = out.into_iter().next().expect("p >= 1").map_err(|e| e.to_string())?;
        let want = reference_r(&v);
        let r_err = (to_nalgebra(&r) - &want).amax();
        ensure(r_err <= 1e-12, || format!("p={p}: R differs from the non-negative-diagonal reference by {r_err:.3e}"))?;
        let qn = to_nalgebra(&q);
        let o_err = (qn.transpose() * &qn - DMatrix::identity(k, k)).norm();
        ensure(o_err <= 1e-12, || format!("p={p}: ‖QᵀQ − I‖_F = {o_err:.3e}"))?;
    }
    Ok(())
}

/// Distributed filter with the redistribution step left out.
struct NoRedistribute<'a> {
    comm: &'a mut Comm,
    a: &'a DistSparse2D,
}

impl FilterSpace for NoRedistribute<'_> {
    type Block = DistDense1D;

    fn apply(&mut self, x: &DistDense1D) -> Result<DistDense1D> {
        spmm_15d(self.comm, self.a, x)
    }

    fn combine2(&mut self, a: &DistDense1D, b: &DistDense1D, f: impl Fn(f64, f64) -> f64) -> Result<DistDense1D> {
        a.zip_map(b, f)
    }

    fn combine3(&mut self, a: &DistDense1D, b: &DistDense1D, c: &DistDense1D, f: impl Fn(f64, f64, f64) -> f64) -> Result<DistDense1D> {
        a.zip3_map(b, c, f)
    }
}

fn dist_filter(seed: u64, fault: Fault) -> Outcome {
    let n = 72;
    let a = sbm(n, seed).map_err(|e| e.to_string())?;
    let v = uniform_matrix(n, 4, seed, 7);
    let bounds = FilterBounds::laplacian_default(4, n);
    for m in [2, 5, 11, 15] {
        let want = chebyshev_filter(&a, &v, &bounds, m).map_err(|e| e.to_string())?;
        for p in [4, 9] {
            let grid = GridTopology::new(p).map_err(|e| e.to_string())?;
            let out = run_spmd(p, Scheduler::Threaded, |c| -> Result<DenseBlock> {
                let r = c.rank();
                let tile = distribute_sparse(&a, grid, r)?;
                let dv = distribute_dense(&v, grid, Layout::V, r)?;
                let y = if fault == Fault::SkipRedistribute {
                    chebyshev_recurrence(&mut NoRedistribute { comm: c, a: &tile }, &dv, &bounds, m)?
                } else {
                    let ident = DistSparse2D::identity(n, grid, r)?;
                    dist_chebyshev_filter(c, &tile, &ident, &dv, m, &bounds)?
                };
                collect_dense(c, &y)
            });
            let got = match out.into_iter().next().expect("p >= 1") {
                Ok(g) => g,
                Err(Error::LayoutMismatch(msg)) => return Err(format!("m={m}, p={p}: layout mismatch: {msg}")),
                Err(e) => return Err(e.to_string()),
            };
            let err = rel_err(&got, &want);
            ensure(err <= 1e-12, || format!("m={m}, p={p}: relative error {err:.3e}"))?;
        }
    }
    Ok(())
}

fn dist_solver(seed: u64) -> Outcome {
    let a = sbm(144, seed).map_err(|e| e.to_string())?;
    let mut cfg = SolverConfig::new(6, 4, 11);
    cfg.seed = seed;
    let seq = solve(&a, &cfg, None, None, Mode::Sequential).map_err(|e| e.to_string())?;
    let mode = Mode::Distributed { p: 4, scheduler: Scheduler::Threaded, check_replication: true };
    let dist = solve(&a, &cfg, None, None, mode).map_err(|e| e.to_string())?;
    let err = seq.result.values.iter().zip(&dist.result.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    ensure(err <= 1e-9, || format!("p=4 eigenvalues differ from sequential by {err:.3e}"))
}

/// Names of the suites, in the order they run.
pub const SUITES: [&str; 6] = ["laplacian_spectrum", "dense_eig", "spmm_15d", "tsqr_r_convention", "dist_filter_layout", "dist_solver"];

pub fn verify(seed: u64, fault: Fault) -> Vec<Check> {
    let outcomes = [
        laplacian_spectrum(seed),
        dense_eig(seed),
        spmm(seed),
        tsqr(seed, fault),
        dist_filter(seed, fault),
        dist_solver(seed),
    ];
    SUITES.iter().zip(outcomes).map(|(&name, outcome)| Check { name, outcome }).collect()
}

