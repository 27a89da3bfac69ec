//! File formats: edge lists, partitions, eigenvalues, eigenvectors and the
//! JSON run report.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chebspectral_core::chebdav::SolverConfig;
use chebspectral_core::clustering::Partition;
use chebspectral_core::dense::DenseBlock;
use chebspectral_core::graph::{parse_edge_list, EdgeFormat, EdgeList};
use chebspectral_core::procgrid::{Collective, CostCounters, Phase};
use serde_json::{json, Value};

/// Leading bytes of the binary eigenvector format.
pub const EIGVEC_MAGIC: &[u8; 8] = b"CHEBSPV1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: chebspectral_core::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), msg: msg.into() }
}

pub fn load_edge_list(path: &Path, format: EdgeFormat) -> Result<EdgeList, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_edge_list(&text, format).map_err(|source| IoError::Parse { path: path.to_path_buf(), source })
}

pub fn write_edge_list(path: &Path, g: &EdgeList) -> Result<(), IoError> {
    write_lines(path, std::iter::once(format!("%N {}", g.n_nodes())).chain(g.edges().iter().map(|(u, v)| format!("{u}\t{v}"))))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One label per line.
pub fn write_partition(path: &Path, p: &Partition) -> Result<(), IoError> {
    write_lines(path, p.labels().iter().map(usize::to_string))
}

pub fn read_partition(path: &Path) -> Result<Partition, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        labels.push(s.parse().map_err(|_| format_err(path, format!("line {}: bad label {s:?}", i + 1)))?);
    }
    Ok(Partition::from_labels(labels))
}

/// One value per line, shortest round-trip formatting.
pub fn write_eigenvalues(path: &Path, values: &[f64]) -> Result<(), IoError> {
    write_lines(path, values.iter().map(|v| format!("{v:?}")))
}

pub fn read_eigenvalues(path: &Path) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| l.trim().parse().map_err(|_| format_err(path, format!("line {}: bad value", i + 1))))
        .collect()
}

/// `N` rows of `k` comma-separated values.
pub fn write_eigenvectors_csv(path: &Path, v: &DenseBlock) -> Result<(), IoError> {
    write_lines(
        path,
        (0..v.rows()).map(|i| (0..v.cols()).map(|j| format!("{:?}", v.get(i, j))).collect::<Vec<_>>().join(",")),
    )
}

/// Magic, `N` and `k` as little-endian `u32`, then the values row-major as
/// little-endian `f64`.
pub fn write_eigenvectors_bin(path: &Path, v: &DenseBlock) -> Result<(), IoError> {
    let (n, k) = (v.rows(), v.cols());
    let dims = |x: usize| u32::try_from(x).map_err(|_| format_err(path, "dimension exceeds u32"));
    let mut buf = Vec::with_capacity(16 + 8 * n * k);
    buf.extend_from_slice(EIGVEC_MAGIC);
    buf.extend_from_slice(&dims(n)?.to_le_bytes());
    buf.extend_from_slice(&dims(k)?.to_le_bytes());
    for i in 0..n {
        for j in 0..k {
            buf.extend_from_slice(&v.get(i, j).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_eigenvectors_bin(path: &Path) -> Result<DenseBlock, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 16 || &bytes[..8] != EIGVEC_MAGIC {
        return Err(format_err(path, "not a chebspectral eigenvector file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (n, k) = (word(8), word(12));
    if bytes.len() != 16 + 8 * n * k {
        return Err(format_err(path, format!("expected {} bytes for {n}x{k}", 16 + 8 * n * k)));
    }
    let val = |i: usize, j: usize| {
        let at = 16 + 8 * (i * k + j);
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
    };
    Ok(DenseBlock::from_fn(n, k, val))
}

pub fn config_json(cfg: &SolverConfig) -> Value {
    json!({
        "k_want": cfg.k_want,
        "k_b": cfg.k_b,
        "m": cfg.m,
        "act_max": cfg.act_max,
        "dim_max": cfg.dim_max,
        "k_ri": cfg.k_ri,
        "tol": cfg.tol,
        "itmax": cfg.itmax,
        "seed": cfg.seed,
        "ortho": format!("{:?}", cfg.ortho),
    })
}

pub fn counters_json(c: &CostCounters) -> Value {
    let phases: serde_json::Map<String, Value> = Phase::ALL
        .iter()
        .map(|&ph| {
            let t = c.phase_tally(ph);
            (ph.name().to_string(), json!({"messages": t.messages, "words": t.words, "collectives": t.count, "flops": c.phase_flops(ph)}))
        })
        .collect();
    let collectives: serde_json::Map<String, Value> = Collective::ALL
        .iter()
        .map(|&k| {
            let t = c.collective_tally(k);
            (k.name().to_string(), json!({"count": t.count, "messages": t.messages, "words": t.words}))
        })
        .collect();
    json!({
        "messages": c.messages,
        "words": c.words,
        "flops": c.flops,
        "phases": phases,
        "collectives": collectives,
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_eigenvectors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let v = DenseBlock::from_fn(5, 3, |i, j| i as f64 - 0.25 * j as f64);
        write_eigenvectors_bin(&p, &v).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 5 * 3 * 8);
        assert_eq!(&bytes[8..12], &5u32.to_le_bytes());
        // row-major: second value is (0, 1)
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), -0.25);
        assert_eq!(read_eigenvectors_bin(&p).unwrap(), v);
    }

    #[test]
    fn eigenvalues_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let v = vec![0.0, 1.0 / 3.0, 1e-17, 1.999_999_999_999];
        write_eigenvalues(&p, &v).unwrap();
        assert_eq!(read_eigenvalues(&p).unwrap(), v);
    }

    #[test]
    fn edge_list_round_trip_keeps_isolated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        let g = EdgeList::new(6, [(0, 1), (2, 1)]).unwrap();
        write_edge_list(&p, &g).unwrap();
        assert_eq!(load_edge_list(&p, EdgeFormat::Tsv).unwrap(), g);
    }

    #[test]
    fn partition_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        let part = Partition::from_labels(vec![0, 2, 1, 1]);
        write_partition(&p, &part).unwrap();
        assert_eq!(read_partition(&p).unwrap(), part);
        fs::write(&p, "0\nx\n").unwrap();
        assert!(matches!(read_partition(&p), Err(IoError::Format { .. })));
        assert!(matches!(read_partition(&dir.path().join("missing")), Err(IoError::Io { .. })));
    }
}
