//! Both schedulers must satisfy the same collective contract.

use chebspectral::run::{solve, Mode};
use chebspectral::transport::{run_spmd, Scheduler};
use chebspectral_core::chebdav::SolverConfig;
use chebspectral_core::graph::{gen_sbm, normalized_laplacian};
use chebspectral_core::procgrid::{tree_reduce, Collective, Comm};
use chebspectral_core::CommError;

const SCHEDULERS: [Scheduler; 2] = [Scheduler::Threaded, Scheduler::Lockstep];

fn local(rank: usize, len: usize) -> Vec<f64> {
    (0..len).map(|i| (rank * 10 + i) as f64 * 0.1 + 1.0 / (rank + 3) as f64).collect()
}

#[test]
fn allgather_concatenates_in_member_order() {
    for s in SCHEDULERS {
        let out = run_spmd(9, s, |c: &mut Comm| {
            let members = [2, 5, 8];
            if members.contains(&c.rank()) {
                Some(c.allgather(&members, &local(c.rank(), 3)).unwrap())
            } else {
                None
            }
        });
        let want: Vec<f64> = [2, 5, 8].iter().flat_map(|&r| local(r, 3)).collect();
        for r in [2, 5, 8] {
            assert_eq!(out[r].as_ref().unwrap(), &want, "{s:?}");
        }
    }
}

#[test]
fn allreduce_matches_fixed_tree_bitwise() {
    for s in SCHEDULERS {
        let world: Vec<usize> = (0..16).collect();
        let out = run_spmd(16, s, |c| c.allreduce(&world, &local(c.rank(), 5)).unwrap());
        let parts: Vec<Vec<f64>> = (0..16).map(|r| local(r, 5)).collect();
        let want = tree_reduce(&parts);
        for o in &out {
            assert_eq!(o, &want, "{s:?}");
        }
    }
}

#[test]
fn reduce_scatter_bcast_and_reduce() {
    for s in SCHEDULERS {
        let out = run_spmd(4, s, |c| {
            let m = [0, 1, 2, 3];
            let rs = c.reduce_scatter(&m, &local(c.rank(), 8)).unwrap();
            let b = c.bcast(&m, 2, &local(c.rank(), 2)).unwrap();
            let r = c.reduce(&m, 1, &local(c.rank(), 2)).unwrap();
            (rs, b, r, c.counters().collective_tally(Collective::ReduceScatter).count)
        });
        let parts: Vec<Vec<f64>> = (0..4).map(|r| local(r, 8)).collect();
        let sum = tree_reduce(&parts);
        for (rank, (rs, b, r, count)) in out.iter().enumerate() {
            assert_eq!(rs, &sum[2 * rank..2 * rank + 2].to_vec());
            assert_eq!(b, &local(2, 2));
            assert_eq!(r.is_some(), rank == 1);
            assert_eq!(*count, 1);
        }
        let small: Vec<Vec<f64>> = (0..4).map(|r| local(r, 2)).collect();
        assert_eq!(out[1].2.as_ref().unwrap(), &tree_reduce(&small));
    }
}

#[test]
fn mismatched_collectives_are_reported() {
    for s in SCHEDULERS {
        let out = run_spmd(2, s, |c| {
            if c.rank() == 0 {
                c.allgather(&[0, 1], &[1.0]).map(|_| ())
            } else {
                c.allreduce(&[0, 1], &[1.0]).map(|_| ())
            }
        });
        assert!(out.iter().all(|r| r.is_err()), "{s:?}: {out:?}");
        assert!(out.iter().any(|r| matches!(r, Err(CommError::TagMismatch { .. }))), "{s:?}: {out:?}");
    }
}

#[test]
fn counters_do_not_depend_on_scheduler() {
    let a = normalized_laplacian(&gen_sbm(96, 3, 0.3, 0.03, 4).unwrap().0);
    let cfg = SolverConfig::new(4, 2, 11);
    let run = |scheduler| solve(&a, &cfg, None, None, Mode::Distributed { p: 9, scheduler, check_replication: true }).unwrap();
    let (x, y) = (run(Scheduler::Threaded), run(Scheduler::Lockstep));
    assert_eq!(x.counters, y.counters);
    assert_eq!(x.result, y.result);
}
