//! Text edge-list formats.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::EdgeList;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFormat {
    /// `u<TAB>v` or `u v` per line, 0-based, `#` comments, optional
    /// `%N <count>` header.
    Tsv,
    /// `coordinate pattern symmetric` or `coordinate real symmetric`,
    /// 1-based; values are ignored.
    MatrixMarket,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn index(tok: Option<&str>, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| err(line, "expected two node indices"))?;
    tok.parse().map_err(|_| err(line, format!("bad node index {tok:?}")))
}

/// Parses an undirected graph. Without a declared size the node count is
/// the largest index plus one.
pub fn parse_edge_list(text: &str, format: EdgeFormat) -> Result<EdgeList> {
    match format {
        EdgeFormat::Tsv => parse_tsv(text),
        EdgeFormat::MatrixMarket => parse_mm(text),
    }
}

fn check_edge(u: usize, v: usize, n: Option<usize>, line: usize) -> Result<()> {
    if u == v {
        return Err(err(line, format!("self-loop at node {u}")));
    }
    if let Some(n) = n {
        if u >= n || v >= n {
            return Err(err(line, format!("edge ({u},{v}) out of range for {n} nodes")));
        }
    }
    Ok(())
}

fn finish(n: Option<usize>, edges: Vec<(usize, usize)>) -> Result<EdgeList> {
    let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    EdgeList::new(n, edges)
}

fn parse_tsv(text: &str) -> Result<EdgeList> {
    let mut n = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(rest) = s.strip_prefix("%N") {
            if n.is_some() || !edges.is_empty() {
                return Err(err(line, "%N header must precede all edges"));
            }
            let count = rest.trim();
            n = Some(count.parse().map_err(|_| err(line, format!("bad node count {count:?}")))?);
            continue;
        }
        let mut toks = s.split_whitespace();
        let (u, v) = (index(toks.next(), line)?, index(toks.next(), line)?);
        if toks.next().is_some() {
            return Err(err(line, "expected exactly two fields"));
        }
        check_edge(u, v, n, line)?;
        edges.push((u, v));
    }
    finish(n, edges)
}

fn parse_mm(text: &str) -> Result<EdgeList> {
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    let ok = words.len() == 5
        && words[0] == "%%matrixmarket"
        && words[1] == "matrix"
        && words[2] == "coordinate"
        && (words[3] == "pattern" || words[3] == "real")
        && words[4] == "symmetric";
    if !ok {
        return Err(err(1, format!("unsupported Matrix Market header {banner:?}")));
    }
    let mut size: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    let mut last = 1;
    for (i, raw) in lines {
        let line = i + 1;
        last = line;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('%') {
            continue;
        }
        let mut toks = s.split_whitespace();
        let Some((n, _)) = size else {
            let r = index(toks.next(), line)?;
            let c = index(toks.next(), line)?;
            let nnz = index(toks.next(), line)?;
            if r != c {
                return Err(err(line, format!("matrix is {r}x{c}, not square")));
            }
            size = Some((r, nnz));
            continue;
        };
        let (u, v) = (index(toks.next(), line)?, index(toks.next(), line)?);
        if u == 0 || v == 0 {
            return Err(err(line, "Matrix Market indices are 1-based"));
        }
        check_edge(u - 1, v - 1, Some(n), line)?;
        edges.push((u - 1, v - 1));
    }
    let (n, nnz) = size.ok_or_else(|| err(last, "missing size line"))?;
    if edges.len() != nnz {
        return Err(err(last, format!("header declares {nnz} entries, found {}", edges.len())));
    }
    EdgeList::new(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_basic_and_canonical() {
        let g = parse_edge_list("0 1\n1 2", EdgeFormat::Tsv).unwrap();
        assert_eq!((g.n_nodes(), g.edges()), (3, &[(0, 1), (1, 2)][..]));
        let g = parse_edge_list("# c\n2\t1\n1 2\n", EdgeFormat::Tsv).unwrap();
        assert_eq!(g.edges(), &[(1, 2)]);
        let g = parse_edge_list("%N 5\n0 1\n", EdgeFormat::Tsv).unwrap();
        assert_eq!(g.n_nodes(), 5);
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let e = |t: &str| parse_edge_list(t, EdgeFormat::Tsv).unwrap_err();
        assert!(matches!(e("0 1\n\n3 3\n"), Error::Parse { line: 3, .. }));
        assert!(matches!(e("0 1\nx 2\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(e("%N 3\n0 5\n"), Error::Parse { line: 2, .. }));
        assert!(matches!(e("0 1 2\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(e("0\n"), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn mm_matches_tsv() {
        let mm = "%%MatrixMarket matrix coordinate pattern symmetric\n% comment\n3 3 2\n2 1\n3 2\n";
        let a = parse_edge_list(mm, EdgeFormat::MatrixMarket).unwrap();
        let b = parse_edge_list("0 1\n1 2", EdgeFormat::Tsv).unwrap();
        assert_eq!(a, b);
        let real = "%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n2 1 1.0\n3 2 0.5\n";
        assert_eq!(parse_edge_list(real, EdgeFormat::MatrixMarket).unwrap(), b);
    }

    #[test]
    fn mm_errors() {
        let e = |t: &str| parse_edge_list(t, EdgeFormat::MatrixMarket).unwrap_err();
        assert!(matches!(e("%%MatrixMarket matrix array real general\n"), Error::Parse { line: 1, .. }));
        let h = "%%MatrixMarket matrix coordinate pattern symmetric\n";
        assert!(matches!(e(&format!("{h}3 3 1\n0 1\n")), Error::Parse { line: 3, .. }));
        assert!(matches!(e(&format!("{h}3 3 1\n4 1\n")), Error::Parse { line: 3, .. }));
        assert!(matches!(e(&format!("{h}3 3 2\n2 1\n")), Error::Parse { line: 3, .. }));
        assert!(matches!(e(&format!("{h}3 4 0\n")), Error::Parse { line: 2, .. }));
    }
}
