//! Matrix Market coordinate export.

use std::io::{self, Write};

use super::CsrMatrix;

/// Writes `m` as `matrix coordinate real general` with 1-based indices.
pub fn write_matrix_market<W: Write>(m: &CsrMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.n, m.n, m.nnz())?;
    for i in 0..m.n {
        for (j, v) in m.row(i) {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

/// Parses the output of [`write_matrix_market`].
pub fn read_matrix_market(text: &str) -> Result<CsrMatrix, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let header = lines.next().ok_or("missing size line")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| format!("bad size line: {e}")))
        .collect::<Result<_, _>>()?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(format!("expected square size line, got {header:?}"));
    }
    let mut entries = Vec::with_capacity(dims[2]);
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(format!("bad entry line {line:?}"));
        }
        let i: usize = t[0].parse().map_err(|e| format!("{e}"))?;
        let j: usize = t[1].parse().map_err(|e| format!("{e}"))?;
        let v: f64 = t[2].parse().map_err(|e| format!("{e}"))?;
        entries.push((i - 1, j - 1, v));
    }
    if entries.len() != dims[2] {
        return Err(format!("expected {} entries, found {}", dims[2], entries.len()));
    }
    Ok(CsrMatrix::from_triplets(dims[0], entries))
}
