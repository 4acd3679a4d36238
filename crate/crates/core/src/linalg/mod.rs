//! Dense fp64 linear algebra: the numeric containers every model is built on,
//! plus the handful of kernels the recurrences need.

mod dd;
mod decomp;
mod matrix;
mod rng;
mod spectral;
pub(crate) mod text;
mod vector;

pub use dd::{Dd, Real};
pub use decomp::{cholesky, cholesky_solve, qr};
pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};
pub use spectral::{spectral_radius, SpectralEstimate};
pub use text::{fmt_f64, parse_matrix, parse_vector, write_matrix, write_vector};
pub use vector::Vector;

use crate::error::{Error, Result};

/// Largest fp64 strictly below one. Activations clamp to this so bounded
/// signals stay inside their open ranges even when saturated.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Checked `A x`.
pub fn matvec(a: &Matrix, x: &Vector) -> Result<Vector> {
    if a.cols() != x.len() {
        return Err(Error::Dimension {
            op: "matvec",
            left: a.shape(),
            right: (x.len(), 1),
        });
    }
    Ok(a.mul_vec(x))
}

/// `u vᵀ`
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut m = Matrix::zeros(u.len(), v.len());
    m.add_outer(u, v);
    m
}

/// Elementwise product.
pub fn hadamard(u: &Vector, v: &Vector) -> Result<Vector> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            op: "hadamard",
            left: (u.len(), 1),
            right: (v.len(), 1),
        });
    }
    Ok(u.zip_map(v, |a, b| a * b))
}

/// tanh clamped to the open interval (−1, 1).
#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh().clamp(-BELOW_ONE, BELOW_ONE)
}

/// Logistic sigmoid, evaluated without overflow and kept inside (0, 1).
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

pub fn tanh_vec(x: &Vector) -> Vector {
    x.map(tanh)
}

pub fn sigmoid_vec(x: &Vector) -> Vector {
    x.map(sigmoid)
}
