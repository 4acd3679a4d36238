//! Plain-text matrix format: a `rows cols` line followed by `rows` lines of
//! space-separated values written with 17 significant digits, which
//! round-trips every fp64 exactly. Vectors are written as `1 len` matrices.

use std::fmt::Write as _;

use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Line source shared by every text parser in the crate; yields
/// `(1-based line number, line)` pairs.
pub(crate) struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    pub(crate) fn peek(&mut self) -> Option<(usize, &'a str)> {
        self.inner.peek().map(|&(i, l)| (i + 1, l))
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next().map(|(i, l)| (i + 1, l))
    }
}

pub(crate) fn lines(text: &str) -> Lines<'_> {
    Lines {
        inner: text.lines().enumerate().peekable(),
    }
}

/// Scientific notation with 17 significant digits; parses back exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", m.rows(), m.cols()).unwrap();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn write_vector(v: &Vector) -> String {
    write_matrix(&Matrix::from_vec(1, v.len(), v.to_vec()).expect("shape"))
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    read_matrix(&mut lines(text))
}

pub fn parse_vector(text: &str) -> Result<Vector> {
    read_vector(&mut lines(text))
}

pub(crate) fn read_matrix(lines: &mut Lines<'_>) -> Result<Matrix> {
    let (no, header) = lines.next().ok_or_else(|| Error::parse(0, "expected matrix header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::parse(no, format!("expected 'rows cols', got '{header}'")));
    }
    let rows: usize = dims[0].parse().map_err(|_| Error::parse(no, "bad row count"))?;
    let cols: usize = dims[1].parse().map_err(|_| Error::parse(no, "bad column count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (no, line) = lines.next().ok_or_else(|| Error::parse(no, "matrix truncated"))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(no, format!("bad number '{tok}'")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                no,
                format!("expected {cols} values, got {}", data.len() - before),
            ));
        }
    }
    Matrix::from_vec(rows, cols, data)
}

pub(crate) fn read_vector(lines: &mut Lines<'_>) -> Result<Vector> {
    let m = read_matrix(lines)?;
    if m.rows() != 1 {
        return Err(Error::parse(0, format!("vector must be 1 x n, got {:?}", m.shape())));
    }
    Ok(Vector::from(m.as_slice()))
}
