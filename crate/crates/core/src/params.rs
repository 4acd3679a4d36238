//! Parameter bundles as ordered sets of named blocks, plus the generic
//! operations every bundle gets for free: gradient descent, accumulation,
//! norms, and the sectioned text format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::text::{self, Lines};
use crate::linalg::{Matrix, Vector};

/// A read-only view of one named parameter block.
#[derive(Debug)]
pub struct Block<'a> {
    pub name: String,
    pub values: &'a [f64],
}

/// A mutable view of one named parameter block.
#[derive(Debug)]
pub struct BlockMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
}

impl<'a> Block<'a> {
    pub fn new(name: impl Into<String>, values: &'a [f64]) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

impl<'a> BlockMut<'a> {
    pub fn new(name: impl Into<String>, values: &'a mut [f64]) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// A bundle of trainable parameters. Gradients use the same type as the
/// parameters they differentiate, so block lists line up one to one.
pub trait Parameters {
    fn blocks(&self) -> Vec<Block<'_>>;
    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }

    fn block_names(&self) -> Vec<String> {
        self.blocks().into_iter().map(|b| b.name).collect()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.values.fill(value);
        }
    }

    fn scale_in_place(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.values.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Euclidean norm over every block.
    fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.values.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * other`; block layouts must match.
    fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.blocks();
        let dst = self.blocks_mut();
        check_layout(&dst, &src)?;
        for (d, s) in dst.into_iter().zip(src) {
            for (a, b) in d.values.iter_mut().zip(s.values) {
                *a += alpha * b;
            }
        }
        Ok(())
    }

    /// Gradient descent: `θ := θ − η ∂L/∂θ` for every parameter.
    fn sgd_step(&mut self, grads: &Self, eta: f64) -> Result<()>
    where
        Self: Sized,
    {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {eta}")));
        }
        self.axpy(-eta, grads)
    }
}

fn check_layout(dst: &[BlockMut<'_>], src: &[Block<'_>]) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Length {
            what: "parameter blocks",
            got: src.len(),
            expected: dst.len(),
        });
    }
    for (d, s) in dst.iter().zip(src) {
        if d.name != s.name || d.values.len() != s.values.len() {
            return Err(Error::Dimension {
                op: "parameter block",
                left: (d.values.len(), 1),
                right: (s.values.len(), 1),
            });
        }
    }
    Ok(())
}

/// Returns a zeroed copy with the same layout.
pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.fill(0.0);
    z
}

/// Rescales `grads` so its norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale_in_place(max_norm / norm);
    }
    norm
}

/// Sectioned text form used for every parameter bundle: `key=value` header
/// lines, then sections, each a name line followed by a matrix in the
/// [`crate::linalg`] text format.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub header: Vec<(String, String)>,
    pub sections: Vec<(String, Matrix)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn matrix(mut self, name: impl Into<String>, m: &Matrix) -> Self {
        self.sections.push((name.into(), m.clone()));
        self
    }

    pub fn vector(mut self, name: impl Into<String>, v: &Vector) -> Self {
        let m = Matrix::from_vec(1, v.len(), v.to_vec()).expect("shape");
        self.sections.push((name.into(), m));
        self
    }

    pub fn get_header(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(0, format!("missing header key '{key}'")))
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn get_matrix(&self, name: &str) -> Result<Matrix> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::parse(0, format!("missing section '{name}'")))
    }

    pub fn get_vector(&self, name: &str) -> Result<Vector> {
        let m = self.get_matrix(name)?;
        if m.rows() != 1 {
            return Err(Error::parse(0, format!("section '{name}' must be a 1 x n vector")));
        }
        Ok(Vector::from(m.as_slice()))
    }

    /// Header line: all `key=value` pairs joined by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.header.is_empty() {
            let pairs: Vec<String> = self.header.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(out, "{}", pairs.join(" ")).unwrap();
        }
        for (name, m) in &self.sections {
            writeln!(out, "{name}").unwrap();
            out.push_str(&text::write_matrix(m));
        }
        out
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut lines = text::lines(s);
        Self::read(&mut lines, |_| false)
    }

    /// Reads header and sections until `stop` accepts a line (left unread)
    /// or the input ends.
    pub(crate) fn read(lines: &mut Lines<'_>, stop: impl Fn(&str) -> bool) -> Result<Self> {
        let mut bundle = Bundle::new();
        if let Some((_, first)) = lines.peek() {
            if first.contains('=') {
                let (no, line) = lines.next().expect("peeked");
                for pair in line.split_whitespace() {
                    let (k, v) = pair
                        .split_once('=')
                        .ok_or_else(|| Error::parse(no, format!("bad header pair '{pair}'")))?;
                    bundle.header.push((k.to_string(), v.to_string()));
                }
            }
        }
        while let Some((_, line)) = lines.peek() {
            let name = line.trim();
            if name.is_empty() {
                lines.next();
                continue;
            }
            if stop(name) {
                break;
            }
            lines.next();
            let m = text::read_matrix(lines)?;
            bundle.sections.push((name.to_string(), m));
        }
        Ok(bundle)
    }
}
