use chebspectral_core::chebdav::{bchdav_solve, SolverConfig};
use chebspectral_core::clustering::{ari, kmeans, nmi, row_normalize};
use chebspectral_core::graph::{gen_sbm, normalized_laplacian, EdgeList};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

#[test]
fn disjoint_blocks_are_recovered_exactly() {
    let (g, truth) = gen_sbm(90, 3, 1.0, 0.0, 11).unwrap();
    let a = normalized_laplacian(&g);
    let r = bchdav_solve(&a, &SolverConfig::new(3, 3, 11), None, None).unwrap();
    assert!(r.converged);
    let f = row_normalize(&r.vectors);
    let km = kmeans(&f, 3, 0, 100, 10).unwrap();
    assert_eq!(ari(&km.partition, &truth).unwrap(), 1.0);
    assert_eq!(nmi(&km.partition, &truth).unwrap(), 1.0);
}

fn random_graph() -> impl Strategy<Value = EdgeList> {
    (3usize..25).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
            EdgeList::new(n, pairs.into_iter().filter(|(u, v)| u != v)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_spectrum_in_zero_two(g in random_graph()) {
        let a = normalized_laplacian(&g);
        let n = a.n();
        let ev = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| a.get(i, j))).eigenvalues;
        for &l in ev.iter() {
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&l));
        }
    }

    #[test]
    fn solver_vectors_are_orthonormal(seed in 0u64..1000) {
        let a = normalized_laplacian(&gen_sbm(80, 2, 0.3, 0.05, seed).unwrap().0);
        let mut cfg = SolverConfig::new(4, 2, 11);
        cfg.seed = seed;
        let r = bchdav_solve(&a, &cfg, None, None).unwrap();
        let g = r.vectors.t_matmul(&r.vectors).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g.get(i, j) - want).abs() < 1e-10);
            }
        }
        prop_assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
    }
}
