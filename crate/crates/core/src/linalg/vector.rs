use std::ops::{Deref, DerefMut};

/// Dense fp64 column vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn ones(len: usize) -> Self {
        Self::filled(len, 1.0)
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self {
            data: vec![value; len],
        }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            data: (0..len).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        assert_eq!(self.len(), other.len(), "zip_map: length mismatch");
        Vector {
            data: self.iter().zip(other.iter()).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Vector {
        self.map(|v| v * s)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Vector) {
        assert_eq!(self.len(), x.len(), "axpy: length mismatch");
        for (a, b) in self.data.iter_mut().zip(x.iter()) {
            *a += alpha * b;
        }
    }

    pub fn add_assign(&mut self, x: &Vector) {
        self.axpy(1.0, x);
    }

    /// Concatenation `[self; other]`.
    pub fn concat(&self, other: &Vector) -> Vector {
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Vector { data }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(data: [f64; N]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self {
            data: iter.into_iter().collect(),
        }
    }
}
