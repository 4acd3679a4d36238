use super::Matrix;
use crate::error::{Error, Result};

/// Householder QR of a square matrix: returns `(Q, R)` with `A = Q R`,
/// `Q` orthogonal and `R` upper triangular.
pub fn qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "qr",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut r = a.clone();
    let mut q = Matrix::identity(n);
    for k in 0..n.saturating_sub(1) {
        let norm: f64 = (k..n).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R := H R, Q := Q H with H = I − 2 v vᵀ / (vᵀ v).
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                r[(i, j)] -= f * v[i - k];
            }
        }
        for i in 0..n {
            let dot: f64 = (k..n).map(|j| q[(i, j)] * v[j - k]).sum();
            let f = 2.0 * dot / vnorm2;
            for j in k..n {
                q[(i, j)] -= f * v[j - k];
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            r[(i, j)] = 0.0;
        }
    }
    Ok((q, r))
}

/// Cholesky factor `L` (lower triangular, `A = L Lᵀ`) of a symmetric
/// positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "cholesky",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = max_diag * n as f64 * f64::EPSILON;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::Singular(format!("pivot {j} is {d:e}")));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::Dimension {
            op: "cholesky_solve",
            left: l.shape(),
            right: b.shape(),
        });
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}
