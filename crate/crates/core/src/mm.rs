//! Matrix Market ingestion for `coordinate real symmetric` files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::sparse::{SparseError, SparseSpdMatrix};

#[derive(Debug, Error)]
pub enum MatrixMarketError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Assembly(#[from] SparseError),
}

fn parse_err(line: usize, message: impl Into<String>) -> MatrixMarketError {
    MatrixMarketError::Parse { line, message: message.into() }
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseSpdMatrix, MatrixMarketError> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Parse the text of a Matrix Market file. Only one triangle may be stored;
/// the mirror entries are materialized here.
pub fn parse_matrix_market(text: &str) -> Result<SparseSpdMatrix, MatrixMarketError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(hline, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(hline, format!("unsupported format '{}', need coordinate", tokens[2])));
    }
    if tokens[3] != "real" {
        return Err(parse_err(hline, format!("unsupported field '{}', need real", tokens[3])));
    }
    if tokens[4] != "symmetric" {
        return Err(parse_err(hline, format!("unsupported symmetry '{}', need symmetric", tokens[4])));
    }

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (sline, size) = body.next().ok_or_else(|| parse_err(hline + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(sline, format!("bad size token '{t}'"))))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 {
        return Err(parse_err(sline, "size line must be 'rows cols nnz'"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    if rows != cols {
        return Err(parse_err(sline, format!("matrix is {rows}x{cols}, not square")));
    }

    let mut triplets = Vec::with_capacity(2 * nnz);
    let mut seen = 0;
    for (lno, l) in body {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(lno, "entry must be 'row col value'"));
        }
        let i: usize = parts[0].parse().map_err(|_| parse_err(lno, format!("bad row index '{}'", parts[0])))?;
        let j: usize = parts[1].parse().map_err(|_| parse_err(lno, format!("bad column index '{}'", parts[1])))?;
        let v: f64 = parts[2].parse().map_err(|_| parse_err(lno, format!("bad value '{}'", parts[2])))?;
        if i == 0 || j == 0 || i > rows || j > rows {
            return Err(parse_err(lno, format!("index ({i}, {j}) out of range for n = {rows}")));
        }
        let (i, j) = (i - 1, j - 1);
        triplets.push((i, j, v));
        if i != j {
            triplets.push((j, i, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(sline, format!("header declares {nnz} entries, found {seen}")));
    }
    Ok(SparseSpdMatrix::from_triplets(rows, &triplets)?)
}

/// Serialize the lower triangle in Matrix Market form. Values are written in
/// shortest round-trip notation so that reading the file back is bitwise exact.
pub fn to_matrix_market(a: &SparseSpdMatrix) -> String {
    let lower: Vec<_> = a.triplets().filter(|&(i, j, _)| j <= i).collect();
    let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(out, "{} {} {}", a.n(), a.n(), lower.len());
    for (i, j, v) in lower {
        let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
    }
    out
}

pub fn write_matrix_market(a: &SparseSpdMatrix, path: impl AsRef<Path>) -> io::Result<()> {
    fs::write(path, to_matrix_market(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn assembles_both_triangles() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n";
        let a = parse_matrix_market(text).unwrap();
        assert_eq!(a.n(), 2);
        assert_eq!(a.max_row_nnz(), 2);
        assert_eq!(a.get(0, 1), Some(1.0));
        assert_eq!(a.get(1, 0), Some(1.0));
        assert_eq!(a.diagonal(), vec![2.0, 2.0]);
        assert_eq!(a.norm2_estimate(), None);
    }

    #[test]
    fn one_by_one() {
        let a = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n1 1 1\n1 1 5\n").unwrap();
        assert_eq!(a.values(), &[5.0]);
        assert_eq!(a.max_row_nnz(), 1);
    }

    #[test]
    fn rejects_unsupported_headers() {
        for header in [
            "%%MatrixMarket matrix coordinate real general",
            "%%MatrixMarket matrix coordinate pattern symmetric",
            "%%MatrixMarket matrix coordinate complex symmetric",
            "%%MatrixMarket matrix array real symmetric",
        ] {
            let err = parse_matrix_market(&format!("{header}\n1 1 1\n1 1 5\n")).unwrap_err();
            assert!(matches!(err, MatrixMarketError::Parse { line: 1, .. }), "{header}: {err}");
        }
    }

    #[test]
    fn reports_offending_line() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n3 1 1\n";
        match parse_matrix_market(text).unwrap_err() {
            MatrixMarketError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 abc\n";
        assert!(matches!(parse_matrix_market(text).unwrap_err(), MatrixMarketError::Parse { line: 3, .. }));
    }

    proptest! {
        #[test]
        fn write_then_read_is_bitwise(diag in prop::collection::vec(1.0f64..1e6, 1..15), off in prop::collection::vec(-1e-3f64..1e-3, 1..15)) {
            let n = diag.len();
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, diag[i]));
                if i + 1 < n {
                    let v = off[i % off.len()];
                    t.push((i + 1, i, v));
                    t.push((i, i + 1, v));
                }
            }
            let a = SparseSpdMatrix::from_triplets(n, &t).unwrap();
            let b = parse_matrix_market(&to_matrix_market(&a)).unwrap();
            prop_assert_eq!(a.row_ptr(), b.row_ptr());
            prop_assert_eq!(a.col_idx(), b.col_idx());
            prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
