use std::fs;
use std::path::Path;
use std::process::Command;

use chebspectral::cli::run;
use chebspectral::io::{read_eigenvalues, read_eigenvectors_bin};

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("chebspectral").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn triangle_has_zero_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("k3.tsv");
    fs::write(&g, "0\t1\n1\t2\n0\t2\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "1", "--out-dir", p(&out)]), 0);
    let ev = read_eigenvalues(&out.join("eigenvalues.txt")).unwrap();
    assert_eq!(ev.len(), 1);
    assert!(ev[0].abs() <= 1e-8);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["converged"], true);
    assert_eq!(report["config"]["k_want"], 1);
    // derived sizes are recorded after fitting to N = 3
    assert_eq!(report["config"]["dim_max"], 3);
}

#[test]
fn bad_input_and_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    assert_eq!(cli(&["eigs", "--input", p(&missing), "--k", "2"]), 2);
    let g = dir.path().join("g.tsv");
    fs::write(&g, "0 1\n1 1\n").unwrap();
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "1", "--out-dir", p(dir.path())]), 2);
    assert_eq!(cli(&["cluster", "--input", p(&g)]), 2);
    fs::write(&g, "0 1\n1 2\n2 3\n").unwrap();
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "1", "--mode", "dist", "--p", "3"]), 2);
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "1", "--mode", "dist", "--p", "81"]), 2);
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "4", "--out-dir", p(dir.path())]), 2);
}

#[test]
fn distributed_mode_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["gen", "--n", "160", "--blocks", "4", "--p-in", "0.3", "--p-out", "0.02", "--seed", "3", "--out-dir", p(dir.path())]), 0);
    let g = dir.path().join("graph.tsv");
    let (s, d) = (dir.path().join("seq"), dir.path().join("dist"));
    assert_eq!(cli(&["eigs", "--input", p(&g), "--k", "6", "--out-dir", p(&s)]), 0);
    let args = ["eigs", "--input", p(&g), "--k", "6", "--mode", "dist", "--p", "4", "--vectors", "bin", "--trace", "--check-replication", "--out-dir", p(&d)];
    assert_eq!(cli(&args), 0);
    let (a, b) = (read_eigenvalues(&s.join("eigenvalues.txt")).unwrap(), read_eigenvalues(&d.join("eigenvalues.txt")).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-9);
    }
    let v = read_eigenvectors_bin(&d.join("eigenvectors.bin")).unwrap();
    assert_eq!((v.rows(), v.cols()), (160, 6));
    let trace = fs::read_to_string(d.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,phase,collectives,messages,words,flops\n"));
    assert!(trace.contains(",filter_spmm,"));
    let report = read_json(&d.join("report.json"));
    assert_eq!(report["p"], 4);
    assert!(report["counters"]["phases"]["filter_spmm"]["words"].as_u64().unwrap() > 0);
    // re-running overwrites with identical results
    let before = fs::read(d.join("eigenvectors.bin")).unwrap();
    assert_eq!(cli(&args), 0);
    assert_eq!(fs::read(d.join("eigenvectors.bin")).unwrap(), before);
}

#[test]
fn cluster_recovers_disjoint_blocks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["gen", "--n", "60", "--blocks", "3", "--p-in", "1.0", "--p-out", "0.0", "--out-dir", p(dir.path())]), 0);
    let (g, t) = (dir.path().join("graph.tsv"), dir.path().join("truth.txt"));
    let out = dir.path().join("c");
    let code = cli(&["cluster", "--input", p(&g), "--k", "3", "--truth", p(&t), "--repeats", "3", "--out-dir", p(&out)]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["ari_mean"], 1.0);
    assert_eq!(report["nmi_mean"], 1.0);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("graph,k,ari_mean,nmi_mean,seconds"));
    assert!(lines.next().unwrap().contains(",3,1,1,"));
    assert_eq!(fs::read_to_string(out.join("partition.txt")).unwrap().lines().count(), 60);
}

#[test]
fn bench_reports_components_per_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["bench", "--n", "320", "--k", "4", "--p-list", "1,4,16", "--out-dir", p(dir.path())]), 0);
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(csv.lines().next(), Some("p,component,iterations,collectives,messages,words,flops"));
    let words = |p: &str, c: &str| -> u64 {
        let r = rows.iter().find(|r| r[0] == p && r[1] == c).unwrap();
        r[5].parse::<u64>().unwrap() / r[2].parse::<u64>().unwrap()
    };
    assert_eq!(words("1", "filter"), 0);
    assert_eq!(words("16", "filter") * 2, words("4", "filter"));
    assert_eq!(cli(&["bench", "--p-list", "1,5", "--out-dir", p(dir.path())]), 2);
}

#[test]
fn binary_verify_and_fault_injection() {
    let exe = env!("CARGO_BIN_EXE_chebspectral");
    let ok = Command::new(exe).args(["verify", "--seed", "3"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    for (fault, name) in [("skip-redistribute", "dist_filter_layout"), ("raw-r-signs", "tsqr_r_convention")] {
        let out = Command::new(exe).args(["verify", "--inject", fault]).output().unwrap();
        assert_eq!(out.status.code(), Some(1));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains(&format!("FAIL {name}")), "{stdout}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(name));
    }
    let usage = Command::new(exe).args(["eigs"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn matrix_market_input_matches_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let mm = dir.path().join("g.mtx");
    fs::write(&mm, "%%MatrixMarket matrix coordinate pattern symmetric\n4 4 4\n2 1\n3 2\n4 3\n4 1\n").unwrap();
    let tsv = dir.path().join("g.tsv");
    fs::write(&tsv, "0 1\n1 2\n2 3\n3 0\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(cli(&["eigs", "--input", p(&mm), "--format", "mm", "--k", "2", "--out-dir", p(&a)]), 0);
    assert_eq!(cli(&["eigs", "--input", p(&tsv), "--k", "2", "--out-dir", p(&b)]), 0);
    assert_eq!(fs::read(a.join("eigenvalues.txt")).unwrap(), fs::read(b.join("eigenvalues.txt")).unwrap());
}
