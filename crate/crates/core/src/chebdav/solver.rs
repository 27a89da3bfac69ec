use alloc::vec::Vec;

use super::{dgks_orthonormalize, FilterBounds, OrthoMethod, SolverConfig};
use crate::dense::{symmetric_eigen, DenseBlock};
use crate::graph::CsrMatrix;
use crate::procgrid::Phase;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Random streams used for replacement vectors start here, so they never
/// collide with the streams handed out by `random_block`.
pub(crate) const ORTHO_STREAM_BASE: u64 = 1 << 32;

/// The operations the Chebyshev-Davidson driver needs from its execution
/// environment. Blocks are the rows of tall-skinny matrices this process
/// owns (all rows for a serial run); small matrices such as Gram products
/// come back replicated.
pub trait SolverBackend {
    /// Global problem dimension.
    fn n(&self) -> usize;
    fn local_rows(&self) -> usize;
    fn filter(&mut self, v: &DenseBlock, bounds: &FilterBounds, m: usize) -> Result<DenseBlock>;
    /// Orthonormal basis for `new` with its span made orthogonal to `basis`.
    fn orthonormalize(&mut self, new: &DenseBlock, basis: &DenseBlock) -> Result<DenseBlock>;
    /// `A·v`, laid out like `v`.
    fn apply(&mut self, v: &DenseBlock) -> Result<DenseBlock>;
    /// `aᵀ·b` over all rows.
    fn gram(&mut self, a: &DenseBlock, b: &DenseBlock) -> Result<DenseBlock>;
    fn column_norms(&mut self, v: &DenseBlock) -> Result<Vec<f64>>;
    /// Fresh uniform(−1, 1) columns; successive calls draw fresh streams.
    fn random_block(&mut self, cols: usize) -> Result<DenseBlock>;
    fn set_phase(&mut self, _phase: Phase) {}
    /// Called once per outer iteration after locking.
    fn after_iteration(&mut self, _state: &SolverState, _iteration: usize) -> Result<()> {
        Ok(())
    }
}

/// Eigenpairs returned by a solve. `vectors` holds the rows this process
/// owns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: DenseBlock,
    /// `‖A v_i − λ_i v_i‖₂` as measured by the solver.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// `false` when `itmax` ran out; the result then pads the locked pairs
    /// with the best unconverged Ritz pairs.
    pub converged: bool,
    /// The configuration after fitting to the problem size.
    pub config: SolverConfig,
}

/// Basis, Rayleigh quotient and counters of a running solve.
///
/// `V` holds `k_sub = k_c + k_act` columns: the locked vectors first, then
/// the active subspace. `W = A·V(:, k_c..k_sub)` and `H` is the projected
/// matrix of the active subspace, kept in a fixed `act_max × act_max`
/// buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    cfg: SolverConfig,
    v: DenseBlock,
    w: DenseBlock,
    h: DenseBlock,
    k_c: usize,
    k_sub: usize,
    k_act: usize,
    k_i: usize,
    k_old: usize,
    eval: Vec<f64>,
    lock_residuals: Vec<f64>,
    ritz: Vec<f64>,
    y: DenseBlock,
    low_nwb: f64,
}

impl SolverState {
    pub fn new(cfg: &SolverConfig, local_rows: usize, low_nwb: f64) -> Self {
        Self {
            cfg: cfg.clone(),
            v: DenseBlock::zeros(local_rows, cfg.dim_max),
            w: DenseBlock::zeros(local_rows, cfg.act_max),
            h: DenseBlock::zeros(cfg.act_max, cfg.act_max),
            k_c: 0,
            k_sub: 0,
            k_act: 0,
            k_i: 0,
            k_old: 0,
            eval: Vec::new(),
            lock_residuals: Vec::new(),
            ritz: Vec::new(),
            y: DenseBlock::zeros(0, 0),
            low_nwb,
        }
    }

    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn k_sub(&self) -> usize {
        self.k_sub
    }

    pub fn k_act(&self) -> usize {
        self.k_act
    }

    pub fn k_i(&self) -> usize {
        self.k_i
    }

    /// Locked eigenvalues, ascending.
    pub fn eval(&self) -> &[f64] {
        &self.eval
    }

    /// Ritz values of the last Rayleigh-Ritz step, ascending.
    pub fn ritz_values(&self) -> &[f64] {
        &self.ritz
    }

    pub fn low_nwb(&self) -> f64 {
        self.low_nwb
    }

    /// `V(:, 0..k_sub)`.
    pub fn basis(&self) -> DenseBlock {
        self.v.columns(0..self.k_sub)
    }

    /// `W(:, 0..k_act)`.
    pub fn w_active(&self) -> DenseBlock {
        self.w.columns(0..self.k_act)
    }

    /// `H(0..k_act, 0..k_act)`.
    pub fn h_active(&self) -> DenseBlock {
        let k = self.k_act;
        DenseBlock::from_fn(k, k, |i, j| self.h.get(i, j))
    }

    /// FNV-1a over every value that must agree bit-for-bit on all ranks of
    /// a distributed solve.
    pub fn replicated_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for c in [self.k_c, self.k_sub, self.k_act, self.k_i, self.k_old] {
            eat(c as u64);
        }
        let hk = self.h_active();
        for x in hk.data().iter().chain(&self.eval).chain(&self.ritz).chain(self.y.data()) {
            eat(x.to_bits());
        }
        eat(self.low_nwb.to_bits());
        h
    }

    /// Appends the orthonormal block `q` to the basis, extends
    /// `W` by `A·q`, fills the new columns of `H` and diagonalizes it.
    pub fn rayleigh_ritz_update(&mut self, backend: &mut impl SolverBackend, q: &DenseBlock) -> Result<()> {
        let kb = q.cols();
        if self.k_sub + kb > self.cfg.dim_max || self.k_act + kb > self.cfg.act_max {
            return Err(Error::InvalidConfig("basis buffers exhausted".into()));
        }
        backend.set_phase(Phase::Spmm);
        let aq = backend.apply(q)?;
        self.v.set_columns(self.k_sub, q);
        self.w.set_columns(self.k_act, &aq);
        self.k_act += kb;
        self.k_sub += kb;

        backend.set_phase(Phase::RayleighQuotient);
        let k = self.k_act;
        let first_new = k - kb;
        let active = self.v.columns(self.k_c..self.k_sub);
        let cols = backend.gram(&active, &aq)?;
        for j in 0..kb {
            for i in 0..k {
                self.h.set(i, first_new + j, cols.get(i, j));
            }
        }
        for j in first_new..k {
            for i in 0..first_new {
                self.h.set(j, i, self.h.get(i, j));
            }
            for i in first_new..j {
                let s = (self.h.get(i, j) + self.h.get(j, i)) / 2.0;
                self.h.set(i, j, s);
                self.h.set(j, i, s);
            }
        }
        let eig = symmetric_eigen(&self.h_active())?;
        self.ritz = eig.values;
        self.y = eig.vectors;
        self.k_old = k;
        Ok(())
    }

    /// Inner restart: shrinks the active subspace to `k_ri` when the next block
    /// would overflow `act_max`. Returns whether it fired.
    pub fn inner_restart(&mut self) -> bool {
        if self.k_act + self.cfg.k_b > self.cfg.act_max {
            self.k_act = self.cfg.k_ri;
            self.k_sub = self.k_act + self.k_c;
            true
        } else {
            false
        }
    }

    /// Rotates the active basis and `W` onto the leading `k_act`
    /// Ritz vectors.
    pub fn rotate(&mut self) -> Result<()> {
        let (kc, k_old, k) = (self.k_c, self.k_old, self.k_act);
        let y = self.y.columns(0..k);
        let v = self.v.columns(kc..kc + k_old).matmul(&y)?;
        let w = self.w.columns(0..k_old).matmul(&y)?;
        self.v.set_columns(kc, &v);
        self.w.set_columns(0, &w);
        Ok(())
    }

    /// Residuals of the leading `k_b` Ritz pairs, locking
    /// of the converged leading run, and the shift of `W` and reset of `H`
    /// that follow. Returns the number of newly locked pairs.
    pub fn residual_deflate(&mut self, backend: &mut impl SolverBackend, tol: f64) -> Result<usize> {
        backend.set_phase(Phase::Residual);
        let kc = self.k_c;
        let kb = self.cfg.k_b.min(self.k_act);
        let x = self.v.columns(kc..kc + kb);
        let norms = self.residual_norms(backend, &x, &self.ritz[..kb])?;
        let e_c = norms.iter().take_while(|&&r| r <= tol).count();
        if e_c > 0 {
            self.eval.extend_from_slice(&self.ritz[..e_c]);
            self.lock_residuals.extend_from_slice(&norms[..e_c]);
            self.k_c += e_c;
            self.sort_locked();
            let shifted = self.w.columns(e_c..self.k_act);
            self.w.set_columns(0, &shifted);
            self.k_act -= e_c;
        }
        let k = self.k_act;
        for j in 0..self.cfg.act_max {
            for i in 0..self.cfg.act_max {
                self.h.set(i, j, 0.0);
            }
        }
        for i in 0..k {
            self.h.set(i, i, self.ritz[e_c + i]);
        }
        Ok(e_c)
    }

    fn residual_norms(&self, backend: &mut impl SolverBackend, x: &DenseBlock, d: &[f64]) -> Result<Vec<f64>> {
        let ax = backend.apply(x)?;
        let mut r = ax.clone();
        for (j, &lambda) in d.iter().enumerate() {
            for (ri, (&a, &v)) in r.col_mut(j).iter_mut().zip(ax.col(j).iter().zip(x.col(j))) {
                *ri = a - v * lambda;
            }
        }
        backend.column_norms(&r)
    }

    fn sort_locked(&mut self) {
        let mut perm: Vec<usize> = (0..self.k_c).collect();
        // stable: ties keep lock order
        perm.sort_by(|&a, &b| self.eval[a].total_cmp(&self.eval[b]));
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return;
        }
        let v = self.v.columns(0..self.k_c).permute_columns(&perm);
        self.v.set_columns(0, &v);
        self.eval = perm.iter().map(|&p| self.eval[p]).collect();
        self.lock_residuals = perm.iter().map(|&p| self.lock_residuals[p]).collect();
    }

    /// Outer restart: truncates the basis to `k_c + k_ro` columns when the next
    /// block would overflow `dim_max`. Returns whether it fired.
    pub fn outer_restart(&mut self) -> bool {
        if self.k_sub + self.cfg.k_b > self.cfg.dim_max {
            let k_ro = self.cfg.k_ro(self.k_c, self.k_act);
            self.k_sub = self.k_c + k_ro;
            self.k_act = k_ro;
            true
        } else {
            false
        }
    }

    /// The next block to filter. Unused initial vectors come first
    /// (one per newly locked pair), then the leading active Ritz vectors;
    /// random columns make up any remaining shortfall.
    pub fn next_filter_input(
        &mut self,
        backend: &mut impl SolverBackend,
        v_init: Option<&DenseBlock>,
        e_c: usize,
    ) -> Result<DenseBlock> {
        let kb = self.cfg.k_b;
        let available = v_init.map_or(0, |v| v.cols() - self.k_i.min(v.cols()));
        let take = e_c.min(available);
        let mut out = match v_init {
            Some(v) if take > 0 => v.columns(self.k_i..self.k_i + take),
            _ => DenseBlock::zeros(self.v.rows(), 0),
        };
        self.k_i += take;
        let ritz = (kb - take).min(self.k_act);
        out = out.hcat(&self.v.columns(self.k_c..self.k_c + ritz))?;
        if out.cols() < kb {
            backend.set_phase(Phase::Other);
            out = out.hcat(&backend.random_block(kb - out.cols())?)?;
        }
        Ok(out)
    }

    /// Moves the filter cut to the median unconverged Ritz value,
    /// provided it stays strictly inside the spectrum bounds.
    pub fn update_low_nwb(&mut self, e_c: usize, bounds: &FilterBounds) {
        let rest = &self.ritz[e_c.min(self.ritz.len())..];
        if rest.is_empty() {
            return;
        }
        let mid = rest.len() / 2;
        let median = if rest.len() % 2 == 1 {
            rest[mid]
        } else {
            (rest[mid - 1] + rest[mid]) / 2.0
        };
        if median > bounds.lower && median < bounds.upper {
            self.low_nwb = median;
        }
    }

    fn finish(&self, backend: &mut impl SolverBackend, iterations: usize, converged: bool) -> Result<EigResult> {
        let k_want = self.cfg.k_want;
        if converged {
            return Ok(EigResult {
                values: self.eval[..k_want].to_vec(),
                vectors: self.v.columns(0..k_want),
                residuals: self.lock_residuals[..k_want].to_vec(),
                iterations,
                converged,
                config: self.cfg.clone(),
            });
        }
        let fill = (k_want - self.k_c.min(k_want)).min(self.k_act);
        let x = self.v.columns(self.k_c..self.k_c + fill);
        backend.set_phase(Phase::Residual);
        let extra = self.residual_norms(backend, &x, &self.ritz[..fill])?;
        let mut values = self.eval.clone();
        values.extend_from_slice(&self.ritz[..fill]);
        let mut residuals = self.lock_residuals.clone();
        residuals.extend(extra);
        let vectors = self.v.columns(0..self.k_c).hcat(&x)?;
        let mut perm: Vec<usize> = (0..values.len()).collect();
        perm.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        perm.truncate(k_want);
        Ok(EigResult {
            values: perm.iter().map(|&p| values[p]).collect(),
            vectors: vectors.permute_columns(&perm),
            residuals: perm.iter().map(|&p| residuals[p]).collect(),
            iterations,
            converged,
            config: self.cfg.clone(),
        })
    }
}

/// Runs the Block Chebyshev-Davidson iteration on any backend.
///
/// Without `bounds` the spectrum is taken to be `[0, 2]` (normalized
/// Laplacians) with the first cut at `2·k_want/N`. `v_init` rows must match
/// the backend's local rows; its columns are consumed progressively.
pub fn solve_with<B: SolverBackend>(
    backend: &mut B,
    cfg: &SolverConfig,
    v_init: Option<&DenseBlock>,
    bounds: Option<FilterBounds>,
) -> Result<EigResult> {
    let n = backend.n();
    let cfg = cfg.fit_to(n)?;
    let bounds = bounds.unwrap_or_else(|| FilterBounds::laplacian_default(cfg.k_want, n));
    bounds.validate()?;
    if let Some(v) = v_init {
        if v.rows() != backend.local_rows() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "initial vectors have {} rows, expected {}",
                v.rows(),
                backend.local_rows()
            )));
        }
    }
    let mut state = SolverState::new(&cfg, backend.local_rows(), bounds.cut);

    let from_init = v_init.map_or(0, |v| v.cols().min(cfg.k_b));
    let mut v_tmp = match v_init {
        Some(v) => v.columns(0..from_init),
        None => DenseBlock::zeros(backend.local_rows(), 0),
    };
    state.k_i = from_init;
    if from_init < cfg.k_b {
        backend.set_phase(Phase::Other);
        let fresh = backend.random_block(cfg.k_b - from_init)?;
        v_tmp = v_tmp.hcat(&fresh)?;
    }

    for iteration in 1..=cfg.itmax {
        let cut_bounds = FilterBounds { cut: state.low_nwb, ..bounds };
        backend.set_phase(Phase::FilterSpmm);
        let filtered = backend.filter(&v_tmp, &cut_bounds, cfg.m)?;
        backend.set_phase(Phase::Orthonormalization);
        let q = backend.orthonormalize(&filtered, &state.basis())?;
        state.rayleigh_ritz_update(backend, &q)?;
        state.inner_restart();
        state.rotate()?;
        let e_c = state.residual_deflate(backend, cfg.tol)?;
        backend.after_iteration(&state, iteration)?;
        if state.k_c >= cfg.k_want {
            return state.finish(backend, iteration, true);
        }
        state.outer_restart();
        v_tmp = state.next_filter_input(backend, v_init, e_c)?;
        state.update_low_nwb(e_c, &bounds);
    }
    log::debug!("itmax={} reached with {} of {} pairs locked", cfg.itmax, state.k_c, cfg.k_want);
    state.finish(backend, cfg.itmax, false)
}

/// Sequential backend over a CSR matrix.
#[derive(Debug)]
pub struct SerialBackend<'a> {
    a: &'a CsrMatrix,
    seed: u64,
    ortho: OrthoMethod,
    random_streams: u64,
    ortho_calls: u64,
}

impl<'a> SerialBackend<'a> {
    pub fn new(a: &'a CsrMatrix, seed: u64, ortho: OrthoMethod) -> Self {
        Self {
            a,
            seed,
            ortho,
            random_streams: 0,
            ortho_calls: 0,
        }
    }
}

impl SolverBackend for SerialBackend<'_> {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn local_rows(&self) -> usize {
        self.a.n()
    }

    fn filter(&mut self, v: &DenseBlock, bounds: &FilterBounds, m: usize) -> Result<DenseBlock> {
        super::chebyshev_filter(self.a, v, bounds, m)
    }

    fn orthonormalize(&mut self, new: &DenseBlock, basis: &DenseBlock) -> Result<DenseBlock> {
        let stream = ORTHO_STREAM_BASE + self.ortho_calls;
        self.ortho_calls += 1;
        match self.ortho {
            OrthoMethod::Dgks => dgks_orthonormalize(new, basis, &mut stream_rng(self.seed, stream)),
            OrthoMethod::BlockCgsTsqr => crate::tsqr::ortho_block_serial(new, basis, self.seed, stream),
        }
    }

    fn apply(&mut self, v: &DenseBlock) -> Result<DenseBlock> {
        self.a.mul_dense(v)
    }

    fn gram(&mut self, a: &DenseBlock, b: &DenseBlock) -> Result<DenseBlock> {
        a.t_matmul(b)
    }

    fn column_norms(&mut self, v: &DenseBlock) -> Result<Vec<f64>> {
        Ok(v.column_sq_norms().into_iter().map(libm::sqrt).collect())
    }

    fn random_block(&mut self, cols: usize) -> Result<DenseBlock> {
        let stream = self.random_streams;
        self.random_streams += 1;
        let n = self.a.n();
        Ok(crate::random_block_rows(n, 0..n, cols, self.seed, stream))
    }
}

/// Smallest `cfg.k_want` eigenpairs of the symmetric matrix `a`.
pub fn bchdav_solve(
    a: &CsrMatrix,
    cfg: &SolverConfig,
    v_init: Option<&DenseBlock>,
    bounds: Option<FilterBounds>,
) -> Result<EigResult> {
    if a.n_rows() != a.n_cols() || !a.is_symmetric() {
        return Err(Error::NonSymmetric);
    }
    solve_with(&mut SerialBackend::new(a, cfg.seed, cfg.ortho), cfg, v_init, bounds)
}
