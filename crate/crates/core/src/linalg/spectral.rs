use super::{Matrix, Rng, Vector};
use crate::error::{Error, Result};

/// Result of [`spectral_radius`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub converged: bool,
    pub iterations: usize,
}

const RESTARTS: u64 = 3;
const STABLE_STEPS: usize = 3;
const START_SEED: u64 = 0x5eed_0f_5ec7;

/// Estimates `max |λ|` of a square matrix by power iteration on the
/// non-symmetric matrix itself.
///
/// Each run iterates a two-dimensional subspace and reads the eigenvalue
/// magnitudes off the 2×2 Rayleigh–Ritz projection. A single vector cannot
/// settle when the dominant eigenvalues form a complex-conjugate pair (or a
/// `±λ` pair), which is the common case for random real matrices; a
/// two-dimensional subspace absorbs both. Runs restart from several fixed
/// start subspaces and the largest converged estimate wins, so the result is
/// a pure function of `a`.
///
/// If no run converges, the estimate falls back to the mean growth rate
/// `‖A^k q‖^{1/k}` over the second half of the iterations and is flagged.
/// Diagonal matrices short-circuit to `max |a_ii|`.
pub fn spectral_radius(a: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            op: "spectral_radius",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if max_iter == 0 {
        return Err(Error::invalid("spectral_radius: max_iter must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("spectral_radius: tol must be positive"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SpectralEstimate {
            radius: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    if a.max_abs() == 0.0 {
        return Ok(SpectralEstimate {
            radius: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    if a.is_diagonal() {
        let radius = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        return Ok(SpectralEstimate {
            radius,
            converged: true,
            iterations: 0,
        });
    }

    let mut best: Option<SpectralEstimate> = None;
    let mut fallback: Option<SpectralEstimate> = None;
    for restart in 0..RESTARTS {
        let mut rng = Rng::seed_from_u64(START_SEED.wrapping_add(restart));
        let run = subspace_run(a, tol, max_iter, &mut rng);
        let slot = if run.converged { &mut best } else { &mut fallback };
        if slot.is_none_or(|b| run.radius > b.radius) {
            *slot = Some(run);
        }
    }
    Ok(best.or(fallback).expect("at least one restart"))
}

fn subspace_run(a: &Matrix, tol: f64, max_iter: usize, rng: &mut Rng) -> SpectralEstimate {
    let n = a.rows();
    let mut q1 = random_unit(n, rng);
    let mut q2 = random_unit(n, rng);
    orthonormalize_against(&mut q2, &q1, rng);

    let mut prev = f64::NAN;
    let mut stable = 0;
    let mut log_growth = Vec::with_capacity(max_iter);
    let mut estimate = 0.0;

    for iter in 1..=max_iter {
        let z1 = a.mul_vec(&q1);
        let z2 = if n > 1 { a.mul_vec(&q2) } else { Vector::zeros(n) };

        // 2×2 projection B = Qᵀ A Q.
        let b11 = q1.dot(&z1);
        let b12 = q1.dot(&z2);
        let b21 = q2.dot(&z1);
        let b22 = q2.dot(&z2);
        estimate = max_eig_abs_2x2(b11, b12, b21, b22);

        let n1 = z1.norm();
        log_growth.push(if n1 > 0.0 { n1.ln() } else { f64::NEG_INFINITY });

        let change = (estimate - prev).abs();
        if change <= tol * estimate.max(f64::MIN_POSITIVE) {
            stable += 1;
            if stable >= STABLE_STEPS {
                return SpectralEstimate {
                    radius: estimate,
                    converged: true,
                    iterations: iter,
                };
            }
        } else {
            stable = 0;
        }
        prev = estimate;

        // Re-orthonormalize the iterated subspace.
        q1 = if n1 > 0.0 { z1.scale(1.0 / n1) } else { random_unit(n, rng) };
        q2 = z2;
        orthonormalize_against(&mut q2, &q1, rng);
    }

    let tail = &log_growth[log_growth.len() / 2..];
    let radius = if tail.is_empty() || tail.iter().any(|v| !v.is_finite()) {
        estimate
    } else {
        (tail.iter().sum::<f64>() / tail.len() as f64).exp()
    };
    SpectralEstimate {
        radius,
        converged: false,
        iterations: max_iter,
    }
}

fn max_eig_abs_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        half_tr.abs() + disc.sqrt()
    } else {
        det.abs().sqrt()
    }
}

fn random_unit(n: usize, rng: &mut Rng) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_| rng.uniform(-1.0, 1.0));
        let norm = v.norm();
        if norm > 1e-8 {
            return v.scale(1.0 / norm);
        }
    }
}

/// Makes `v` a unit vector orthogonal to unit vector `u` (two Gram–Schmidt
/// passes); re-draws it if it collapses onto `u`.
fn orthonormalize_against(v: &mut Vector, u: &Vector, rng: &mut Rng) {
    if v.len() < 2 {
        *v = Vector::zeros(v.len());
        return;
    }
    let scale = v.norm();
    for _ in 0..2 {
        let proj = u.dot(v);
        v.axpy(-proj, u);
    }
    let norm = v.norm();
    if norm > 1e-10 * scale.max(f64::MIN_POSITIVE) && norm > 0.0 {
        *v = v.scale(1.0 / norm);
    } else {
        let mut w = random_unit(v.len(), rng);
        for _ in 0..2 {
            let proj = u.dot(&w);
            w.axpy(-proj, u);
        }
        let wn = w.norm();
        *v = w.scale(1.0 / wn);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_radius_one() {
        for p in 1..6 {
            let est = spectral_radius(&Matrix::identity(p), 1e-12, 100).unwrap();
            assert_eq!(est.radius, 1.0);
            assert!(est.converged);
        }
    }

    #[test]
    fn diagonal_is_exact() {
        let est = spectral_radius(&Matrix::diag(&[0.5, 0.2]), 1e-12, 10).unwrap();
        assert_eq!(est.radius, 0.5);
        let est = spectral_radius(&Matrix::diag(&[0.1, -0.7, 0.3]), 1e-12, 10).unwrap();
        assert_eq!(est.radius, 0.7);
    }

    #[test]
    fn rotation_pair_is_handled() {
        // Eigenvalues 0.8·e^{±iθ}: plain power iteration never settles.
        let (s, c) = 0.7f64.sin_cos();
        let a = Matrix::from_rows(&[[0.8 * c, -0.8 * s, 0.0], [0.8 * s, 0.8 * c, 0.0], [0.0, 0.0, 0.3]]);
        let est = spectral_radius(&a, 1e-12, 10_000).unwrap();
        assert!(est.converged);
        assert!((est.radius - 0.8).abs() < 1e-9, "{est:?}");
    }

    #[test]
    fn opposite_sign_pair() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let est = spectral_radius(&a, 1e-12, 1000).unwrap();
        assert!((est.radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_zero() {
        let est = spectral_radius(&Matrix::zeros(3, 3), 1e-10, 100).unwrap();
        assert_eq!(est.radius, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            spectral_radius(&Matrix::zeros(2, 3), 1e-9, 10),
            Err(Error::NotSquare { .. })
        ));
        assert!(spectral_radius(&Matrix::identity(2), 1e-9, 0).is_err());
    }

    #[test]
    fn scale_equivariant() {
        let mut rng = Rng::seed_from_u64(11);
        let a = Matrix::from_fn(6, 6, |_, _| rng.uniform(-1.0, 1.0));
        let r1 = spectral_radius(&a, 1e-12, 20_000).unwrap().radius;
        let r2 = spectral_radius(&a.scale(3.0), 1e-12, 20_000).unwrap().radius;
        assert!((r2 - 3.0 * r1).abs() < 1e-9 * r2);
    }
}
