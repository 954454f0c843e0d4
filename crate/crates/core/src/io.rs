//! Plain CSV for matrices and data tables.
//!
//! A matrix file holds `p` lines of `p` comma-separated decimals, LF endings,
//! no header. Values are written in the shortest form that parses back to the
//! same `f64`, so a write/read round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// Asymmetry above this max-abs value is reported when a matrix is read.
pub const SYMMETRY_WARN_TOL: f64 = 1e-9;

/// Shortest round-trip decimal, with exponent notation for very large or small magnitudes.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn render(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_value(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Writes any dense matrix as CSV.
pub fn write_dense(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, render(m))?;
    Ok(())
}

pub fn write_matrix(path: impl AsRef<Path>, m: &SymMatrix) -> Result<()> {
    write_dense(path, m.as_matrix())
}

fn parse_field(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("not a number: {:?}", tok.trim()) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value {v}") });
    }
    Ok(v)
}

fn looks_numeric(line: &str) -> bool {
    line.split(',').next().is_some_and(|t| t.trim().parse::<f64>().is_ok())
}

/// Data rows and the header line, if one was found.
type Rows = (Vec<Vec<f64>>, Option<Vec<String>>);

fn parse_rows(text: &str, allow_header: bool) -> Result<Rows> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header = None;
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if allow_header && rows.is_empty() && header.is_none() && !looks_numeric(line) {
            header = Some(line.split(',').map(|t| t.trim().to_string()).collect::<Vec<_>>());
            width = header.as_ref().map(Vec::len);
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_field(t, line_no))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok((rows, header))
}

/// Parses a dense `n x p` table without header.
pub fn parse_dense(text: &str) -> Result<DMatrix<f64>> {
    let (rows, _) = parse_rows(text, false)?;
    Ok(to_dense(&rows))
}

fn to_dense(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, p, |i, j| rows[i][j])
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_dense(&fs::read_to_string(path)?)
}

/// Parses a square matrix and symmetrizes it. Returns the matrix with the
/// largest `|m_ij - m_ji|` seen before symmetrizing.
pub fn parse_sym_matrix(text: &str) -> Result<(SymMatrix, f64)> {
    let m = parse_dense(text)?;
    if m.nrows() == 0 {
        return Err(Error::Parse { line: 1, msg: "empty matrix".into() });
    }
    if m.nrows() != m.ncols() {
        return Err(Error::Parse {
            line: m.nrows(),
            msg: format!("matrix is {} x {}, expected square", m.nrows(), m.ncols()),
        });
    }
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_WARN_TOL {
        log::warn!("input matrix asymmetric by {asym:e}; using (M + Mᵀ)/2");
    }
    Ok((SymMatrix::from_symmetrized(m)?, asym))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<SymMatrix> {
    parse_sym_matrix(&fs::read_to_string(path)?).map(|(m, _)| m)
}

/// Numeric table with an optional header line, recognised by a non-numeric first token.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

pub fn parse_table(text: &str) -> Result<Table> {
    let (rows, header) = parse_rows(text, true)?;
    Ok(Table { header, data: to_dense(&rows) })
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    parse_table(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.csv");
        write_matrix(&path, &SymMatrix::identity(2)).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "1,0\n0,1\n");
        assert_eq!(read_matrix(&path).unwrap(), SymMatrix::identity(2));
    }

    #[test]
    fn values_survive_round_trip() {
        let vals = [0.1, -1.0 / 3.0, 1e-300, 6.02e23, -0.0, 123456.789, f64::MIN_POSITIVE, 1e-5, 9.99e15];
        for v in vals {
            assert_eq!(format_value(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        let m = SymMatrix::from_upper_fn(3, |i, j| (i as f64 + 1.0).ln() / (j as f64 + 7.0));
        let (back, asym) = parse_sym_matrix(&render(m.as_matrix())).unwrap();
        assert_eq!(back, m);
        assert_eq!(asym, 0.0);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(parse_dense("1,2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_sym_matrix("1,2\n3\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse_dense("1,abc\n").is_err());
        assert!(parse_dense("1,inf\n").is_err());
        assert!(parse_dense("NaN\n").is_err());
        assert!(parse_sym_matrix("1,2,3\n4,5,6\n").is_err());
        assert!(parse_sym_matrix("").is_err());
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let (m, asym) = parse_sym_matrix("1,0.2\n0.4,1\n").unwrap();
        assert!((asym - 0.2).abs() < 1e-15);
        assert!((m[(0, 1)] - 0.3).abs() < 1e-15);
        assert_eq!(m[(0, 1)], m[(1, 0)]);
    }

    #[test]
    fn table_header_detection() {
        let t = parse_table("date,a,b\n1,2,3\n4,5,6\n").unwrap();
        assert_eq!(t.header.unwrap(), vec!["date", "a", "b"]);
        assert_eq!(t.data.shape(), (2, 3));
        let t = parse_table("1,2\r\n3,4\r\n").unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.data[(1, 0)], 3.0);
        assert!(parse_table("a,b\n1,2,3\n").is_err());
    }
}
