//! Graphs, sparse storage and the normalized Laplacian.

mod csr;
mod parse;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use self::csr::CsrMatrix;
pub use self::parse::{parse_edge_list, EdgeFormat};
use crate::clustering::Partition;
use crate::dense::DenseBlock;
use crate::procgrid::coarse_range;
use crate::{Error, Result};

/// Undirected, unweighted graph as a canonical edge list: every edge stored
/// once as `(u, v)` with `u < v`, sorted, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// Canonicalizes `edges`; duplicates (in either orientation) collapse.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) out of range for {n_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            n_nodes,
            edges: canon,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Component label per node, numbered in order of first appearance.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &self.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
        let mut label = vec![usize::MAX; self.n_nodes];
        let mut next = 0;
        let out = (0..self.n_nodes)
            .map(|x| {
                let r = find(&mut parent, x);
                if label[r] == usize::MAX {
                    label[r] = next;
                    next += 1;
                }
                label[r]
            })
            .collect();
        (next, out)
    }
}

/// `I − D^{-1/2} S D^{-1/2}` for the 0/1 adjacency `S` of `g`.
///
/// Isolated nodes get an identity row and column.
pub fn normalized_laplacian(g: &EdgeList) -> CsrMatrix {
    let deg = g.degrees();
    let mut triplets = Vec::with_capacity(2 * g.edges().len() + g.n_nodes());
    for i in 0..g.n_nodes() {
        triplets.push((i, i, 1.0));
    }
    for &(u, v) in g.edges() {
        let w = -1.0 / libm::sqrt((deg[u] * deg[v]) as f64);
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    CsrMatrix::from_triplets(g.n_nodes(), g.n_nodes(), &triplets)
        .expect("canonical edge list yields a valid matrix")
}

/// Reference sparse-times-dense product; the oracle for the distributed kernel.
pub fn spmm_serial(a: &CsrMatrix, v: &DenseBlock) -> Result<DenseBlock> {
    a.mul_dense(v)
}

/// Stochastic block model with contiguous, near-equal blocks.
///
/// Each unordered pair `u < v` is decided by one draw from a ChaCha stream
/// keyed by `(seed, u)`, so the output does not depend on platform or on how
/// many pairs were skipped elsewhere.
pub fn gen_sbm(
    n_nodes: usize,
    n_blocks: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(EdgeList, Partition)> {
    let valid = |p: f64| (0.0..=1.0).contains(&p);
    if !valid(p_in) || !valid(p_out) || p_in <= p_out {
        return Err(Error::InvalidProbability(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if n_blocks == 0 || n_blocks > n_nodes {
        return Err(Error::InvalidGraph(format!(
            "{n_blocks} blocks for {n_nodes} nodes"
        )));
    }
    let labels: Vec<usize> = (0..n_blocks)
        .flat_map(|b| coarse_range(n_nodes, n_blocks, 1, b).map(move |_| b))
        .collect();
    let mut edges = Vec::new();
    for u in 0..n_nodes {
        let mut rng = crate::rng::stream_rng(seed, u as u64);
        for v in u + 1..n_nodes {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            let draw: f64 = rng.random();
            if draw < p {
                edges.push((u, v));
            }
        }
    }
    let partition = Partition::new(labels, n_blocks)?;
    Ok((EdgeList::new(n_nodes, edges)?, partition))
}

/// `p · max_{i,j} nnz(A[i,j]) / nnz(A)` for the `q × q` tiling used by the
/// distributed kernels (`p = q²`).
pub fn load_imbalance(a: &CsrMatrix, grid_q: usize) -> Result<f64> {
    if a.nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if grid_q == 0 {
        return Err(Error::InvalidConfig("grid_q must be positive".into()));
    }
    let n = a.n_rows();
    let p = grid_q * grid_q;
    let mut col_tile = vec![0usize; a.n_cols()];
    for j in 0..grid_q {
        for c in coarse_range(a.n_cols(), p, grid_q, j) {
            col_tile[c] = j;
        }
    }
    let mut counts = vec![0usize; p];
    for i in 0..grid_q {
        for r in coarse_range(n, p, grid_q, i) {
            for (c, _) in a.row(r) {
                counts[i * grid_q + col_tile[c]] += 1;
            }
        }
    }
    let max = counts.into_iter().max().unwrap_or(0);
    Ok(p as f64 * max as f64 / a.nnz() as f64)
}
