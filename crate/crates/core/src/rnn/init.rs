//! Recurrent weight initialisers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{qr, spectral_radius, Matrix, Rng};

/// How to draw a recurrent weight matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Entries uniform in `±1/√cols`.
    Uniform,
    /// `I + ε N`, `N` uniform in `[−1, 1]`.
    CloseToIdentity { eps: f64 },
    /// `Q` of a random square matrix, with column signs fixed so `R` has a
    /// positive diagonal.
    Orthogonal,
    /// A random matrix rescaled to the given spectral radius.
    SpectralScaled { target: f64 },
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::Uniform => "uniform",
            InitScheme::CloseToIdentity { .. } => "close_to_identity",
            InitScheme::Orthogonal => "orthogonal",
            InitScheme::SpectralScaled { .. } => "spectral_scaled",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::CloseToIdentity { eps } => write!(f, "{}:{eps}", self.name()),
            InitScheme::SpectralScaled { target } => write!(f, "{}:{target}", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// `uniform`, `orthogonal`, `close_to_identity:<eps>` or
    /// `spectral_scaled:<radius>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
        let value = || -> Result<f64> {
            arg.and_then(|a| a.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("init scheme '{s}' needs a numeric argument")))
        };
        match (name, arg) {
            ("uniform", None) => Ok(InitScheme::Uniform),
            ("orthogonal", None) => Ok(InitScheme::Orthogonal),
            ("close_to_identity", _) => Ok(InitScheme::CloseToIdentity { eps: value()? }),
            ("spectral_scaled", _) => Ok(InitScheme::SpectralScaled { target: value()? }),
            _ => Err(Error::invalid(format!("unknown init scheme '{s}'"))),
        }
    }
}

pub(crate) const SPECTRAL_TOL: f64 = 1e-12;
pub(crate) const SPECTRAL_MAX_ITER: usize = 20_000;

pub fn init_weights((rows, cols): (usize, usize), scheme: &InitScheme, rng: &mut Rng) -> Result<Matrix> {
    let square = || {
        if rows == cols {
            Ok(())
        } else {
            Err(Error::NotSquare {
                op: "init_weights",
                rows,
                cols,
            })
        }
    };
    match *scheme {
        InitScheme::Uniform => {
            let s = 1.0 / (cols.max(1) as f64).sqrt();
            Ok(Matrix::from_fn(rows, cols, |_, _| rng.uniform(-s, s)))
        }
        InitScheme::CloseToIdentity { eps } => {
            square()?;
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::invalid(format!("close-to-identity eps must be >= 0, got {eps}")));
            }
            Ok(Matrix::from_fn(rows, cols, |r, c| {
                let noise = eps * rng.uniform(-1.0, 1.0);
                if r == c {
                    1.0 + noise
                } else {
                    noise
                }
            }))
        }
        InitScheme::Orthogonal => {
            square()?;
            let a = Matrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0));
            let (mut q, r) = qr(&a)?;
            for c in 0..cols {
                if r[(c, c)] < 0.0 {
                    for i in 0..rows {
                        q[(i, c)] = -q[(i, c)];
                    }
                }
            }
            Ok(q)
        }
        InitScheme::SpectralScaled { target } => {
            square()?;
            if !(target > 0.0) || !target.is_finite() {
                return Err(Error::invalid(format!("target spectral radius must be > 0, got {target}")));
            }
            let s = 1.0 / (cols.max(1) as f64).sqrt();
            let a = Matrix::from_fn(rows, cols, |_, _| rng.uniform(-s, s));
            let rho = spectral_radius(&a, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?.radius;
            if !(rho > 0.0) {
                return Err(Error::Singular("random matrix has zero spectral radius".into()));
            }
            Ok(a.scale(target / rho))
        }
    }
}
