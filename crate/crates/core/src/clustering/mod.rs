//! Spectral clustering back end: row normalization of the eigenvector
//! block, seeded k-means, and partition agreement scores.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dense::DenseBlock;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Cluster label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(Error::InvalidClustering(format!(
                "label {bad} out of range for {n_clusters} clusters"
            )));
        }
        Ok(Self { labels, n_clusters })
    }

    /// Cluster count taken as `max label + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let n_clusters = labels.iter().max().map_or(0, |&m| m + 1);
        Self { labels, n_clusters }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `N × k` features with unit-norm rows, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    zero_rows: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows that were entirely zero and so could not be normalized.
    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }
}

pub fn row_normalize(v: &DenseBlock) -> FeatureMatrix {
    let (rows, dim) = (v.rows(), v.cols());
    let mut data = vec![0.0; rows * dim];
    let mut zero_rows = Vec::new();
    for i in 0..rows {
        let row = &mut data[i * dim..(i + 1) * dim];
        for (j, x) in row.iter_mut().enumerate() {
            *x = v.get(i, j);
        }
        let norm = libm::sqrt(row.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            zero_rows.push(i);
        } else {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    FeatureMatrix { rows, dim, data, zero_rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

/// Lloyd iterations from k-means++ seeds; the restart with the lowest
/// inertia wins (earliest on ties). Restart `r` draws from stream `r` of
/// `seed`, so results do not depend on the restart count beyond selection.
pub fn kmeans(
    f: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    n_restarts: usize,
) -> Result<KMeansResult> {
    if k == 0 || k > f.rows {
        return Err(Error::InvalidClustering(format!(
            "cannot form {k} clusters from {} points",
            f.rows
        )));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..n_restarts.max(1) {
        let run = lloyd(f, k, seed, r as u64, max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(f: &FeatureMatrix, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = f.rows;
    let mut centers = Vec::with_capacity(k * f.dim);
    centers.extend_from_slice(f.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(f.row(i), &centers[..f.dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = f.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(f.row(i), &c));
        }
        centers.extend_from_slice(&c);
    }
    centers
}

fn lloyd(f: &FeatureMatrix, k: usize, seed: u64, stream: u64, max_iter: usize) -> KMeansResult {
    let (n, dim) = (f.rows, f.dim);
    let mut rng = stream_rng(seed, stream);
    let mut centers = plus_plus(f, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            let (mut arg, mut min) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(f.row(i), &centers[c * dim..(c + 1) * dim]);
                if d < min {
                    (arg, min) = (c, d);
                }
            }
            inertia += min;
            changed |= *label != arg;
            *label = arg;
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(f.row(i)) {
                *s += x;
            }
        }
        // an emptied cluster keeps its previous center
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
    }
    let inertia = *trace.last().expect("at least one assignment");
    KMeansResult {
        partition: Partition { labels, n_clusters: k },
        inertia,
        inertia_trace: trace,
    }
}

struct Contingency {
    n: usize,
    table: Vec<usize>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
}

fn contingency(a: &Partition, b: &Partition) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::InvalidClustering(format!(
            "partitions cover {} and {} nodes",
            a.len(),
            b.len()
        )));
    }
    let (ka, kb) = (a.n_clusters, b.n_clusters);
    let mut table = vec![0usize; ka * kb];
    let mut row_sums = vec![0usize; ka];
    let mut col_sums = vec![0usize; kb];
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        table[x * kb + y] += 1;
        row_sums[x] += 1;
        col_sums[y] += 1;
    }
    Ok(Contingency { n: a.len(), table, row_sums, col_sums })
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index. When the chance-adjusted denominator vanishes
/// (both partitions trivial, or fewer than two nodes) the score is 1.
pub fn ari(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.table.iter().map(|&c| pairs(c)).sum();
    let sa: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let sb: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Normalized mutual information, `I(a; b) / ((H(a) + H(b)) / 2)`.
/// Two single-cluster partitions score 1.
pub fn nmi(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let kb = t.col_sums.len();
    let mut mi = 0.0;
    for (idx, &c) in t.table.iter().enumerate() {
        if c > 0 {
            let (i, j) = (idx / kb, idx % kb);
            let outer = t.row_sums[i] as f64 * t.col_sums[j] as f64;
            mi += c as f64 / n * libm::log(n * c as f64 / outer);
        }
    }
    let mean = (entropy(&t.row_sums, n) + entropy(&t.col_sums, n)) / 2.0;
    if mean == 0.0 {
        return Ok(1.0);
    }
    Ok((mi / mean).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn part(labels: &[usize]) -> Partition {
        Partition::from_labels(labels.to_vec())
    }

    #[test]
    fn partition_rejects_out_of_range() {
        assert!(Partition::new(vec![0, 2], 2).is_err());
        assert_eq!(part(&[0, 3]).n_clusters(), 4);
    }

    #[test]
    fn normalize_rows() {
        let v = DenseBlock::from_rows(&[&[3.0, 4.0], &[0.0, 0.0]]);
        let f = row_normalize(&v);
        assert_eq!(f.row(0), [0.6, 0.8]);
        assert_eq!(f.row(1), [0.0, 0.0]);
        assert_eq!(f.zero_rows(), [1]);
    }

    #[test]
    fn normalized_random_rows_have_unit_norm() {
        let f = row_normalize(&crate::uniform_matrix(10, 3, 5, 0));
        for i in 0..10 {
            let n: f64 = f.row(i).iter().map(|x| x * x).sum();
            assert!((libm::sqrt(n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_separates_clouds() {
        let pts = DenseBlock::from_fn(40, 2, |i, j| {
            let base = if i < 20 { 10.0 } else { -10.0 };
            base + 0.01 * ((i * 7 + j * 3) % 5) as f64
        });
        let f = FeatureMatrix {
            rows: 40,
            dim: 2,
            data: (0..40).flat_map(|i| [pts.get(i, 0), pts.get(i, 1)]).collect(),
            zero_rows: vec![],
        };
        let r = kmeans(&f, 2, 1, 100, 3).unwrap();
        let l = r.partition.labels();
        assert!(l[..20].iter().all(|&x| x == l[0]));
        assert!(l[20..].iter().all(|&x| x == l[20]));
        assert_ne!(l[0], l[20]);
    }

    #[test]
    fn kmeans_with_k_equal_n() {
        let f = row_normalize(&crate::uniform_matrix(6, 3, 9, 0));
        let r = kmeans(&f, 6, 4, 50, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.partition.labels().to_vec();
        l.sort_unstable();
        assert_eq!(l, [0, 1, 2, 3, 4, 5]);
        assert!(kmeans(&f, 7, 4, 50, 1).is_err());
    }

    #[test]
    fn kmeans_deterministic_and_monotone() {
        let f = row_normalize(&crate::uniform_matrix(200, 3, 11, 0));
        let a = kmeans(&f, 5, 3, 100, 4).unwrap();
        assert_eq!(a, kmeans(&f, 5, 3, 100, 4).unwrap());
        assert!(a.inertia_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn score_conventions() {
        let a = part(&[0, 0, 1, 1]);
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        let b = part(&[1, 1, 0, 0]);
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert!((nmi(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let one = part(&[0, 0, 0]);
        assert_eq!(ari(&one, &one).unwrap(), 1.0);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert!(ari(&a, &one).is_err());
    }

    #[test]
    fn ari_hand_value() {
        // table [[2,1],[0,2]]: index 2, row and column pair sums 4, 10 pairs
        // expected 1.6, max 4, so ARI = 0.4 / 2.4
        let a = part(&[0, 0, 0, 1, 1]);
        let b = part(&[0, 0, 1, 1, 1]);
        assert!((ari(&a, &b).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn independent_partitions_score_near_zero() {
        for seed in 0..50 {
            let mut rng = stream_rng(seed, 0);
            let a = Partition::new((0..100).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
            let b = Partition::new((0..100).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
            assert!(ari(&a, &b).unwrap().abs() <= 0.15);
        }
    }

    proptest! {
        #[test]
        fn scores_invariant_under_relabeling(
            labels in proptest::collection::vec((0usize..4, 0usize..3), 2..60),
            shift in 1usize..4,
        ) {
            let a = Partition::new(labels.iter().map(|l| l.0).collect(), 4).unwrap();
            let b = Partition::new(labels.iter().map(|l| l.1).collect(), 3).unwrap();
            let a2 = Partition::new(a.labels().iter().map(|l| (l + shift) % 4).collect(), 4).unwrap();
            let r1 = ari(&a, &b).unwrap();
            let n1 = nmi(&a, &b).unwrap();
            prop_assert!((r1 - ari(&a2, &b).unwrap()).abs() < 1e-12);
            prop_assert!((n1 - nmi(&a2, &b).unwrap()).abs() < 1e-12);
            prop_assert!((r1 - ari(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r1));
            prop_assert!((0.0..=1.0).contains(&n1));
        }
    }
}
