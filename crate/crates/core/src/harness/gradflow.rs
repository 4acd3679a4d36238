use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix, Rng, Vector};
use crate::rnn::{RnnCell, RnnVariant};

/// Adjoint norms are rescaled to this value when they grow past it.
pub const NORM_CAP: f64 = 1e12;

/// How `‖∂L_T/∂h_t‖` evolves as the error travels back from step `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradFlowReport {
    /// `norms[t−1] = ‖δ_t‖₂` for `t = 1 … T`.
    pub norms: Vec<f64>,
    /// Per-step factor `r` of the fit `‖δ_t‖ ≈ C r^{T−t}`.
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Inclusive 1-based step range used by the fit.
    pub fit_range: (usize, usize),
    /// Spectral radius of the one-step state Jacobian at the zero state.
    pub spectral_radius: f64,
    /// Latest step at which the norm hit [`NORM_CAP`].
    pub capped_at: Option<usize>,
}

/// Jacobian `∂h_t/∂h_{t−1}` of a one-delay cell at `h = 0`, `i = 0`.
pub fn zero_state_jacobian(cell: &RnnCell) -> Result<Matrix> {
    if cell.delays() != [1] {
        return Err(Error::invalid("the gradient-flow probe needs a cell with the single delay 1"));
    }
    let w = cell.effective_one_step();
    Ok(match cell.variant() {
        RnnVariant::Leaky(cfg) => {
            let tau = cfg.tau();
            Matrix::from_fn(w.rows(), w.cols(), |i, j| {
                let leak = if i == j { 1.0 - 1.0 / tau[i] } else { 0.0 };
                leak + w[(i, j)] / tau[i]
            })
        }
        _ => w,
    })
}

/// Vanilla cell with `W` uniform in `[−1, 1]` rescaled to spectral radius
/// `lambda`, one input and zero bias.
pub fn scaled_cell(p: usize, lambda: f64, seed: u64) -> Result<RnnCell> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("target spectral radius must be positive, got {lambda}")));
    }
    let mut rng = Rng::child(seed, "gradflow/W");
    let w = Matrix::from_fn(p, p, |_, _| rng.uniform(-1.0, 1.0));
    let radius = spectral_radius(&w, 1e-13, 100_000)?.radius;
    if radius <= 1e-12 {
        return Err(Error::invalid("sampled recurrent weight is nilpotent"));
    }
    RnnCell::single(RnnVariant::Vanilla, w.scale(lambda / radius), Matrix::zeros(p, 1), Vector::zeros(p))
}

/// Runs the cell on `len` zero inputs, seeds `δ_T = 1`, propagates the
/// adjoint back to `t = 1`, and fits the per-step rate over the middle half
/// `[T/4, 3T/4]` (restricted to steps after any capped step).
pub fn gradient_flow_probe(cell: &RnnCell, len: usize) -> Result<GradFlowReport> {
    if len < 10 {
        return Err(Error::invalid(format!("probe length must be at least 10, got {len}")));
    }
    let jac = zero_state_jacobian(cell)?;
    let radius = spectral_radius(&jac, 1e-13, 100_000)?.radius;
    let p = cell.hidden_width();
    let trace = cell.run(&vec![Vector::zeros(cell.input_width()); len])?;
    let mut direct = vec![Vector::zeros(p); len];
    direct[len - 1] = Vector::ones(p);
    let back = cell.backward(&trace, &direct, None, Some(NORM_CAP))?;
    let norms: Vec<f64> = back.deltas.iter().map(Vector::norm).collect();

    let mut lo = (len / 4).max(1);
    let hi = (3 * len / 4).min(len);
    if let Some(c) = back.capped_at {
        lo = lo.max(c + 1);
    }
    if hi < lo + 1 {
        return Err(Error::NonFinite(format!(
            "adjoint norm reached the cap at step {} leaving fewer than two points to fit",
            back.capped_at.unwrap_or(0)
        )));
    }
    let (rate, residual) = fit_rate(&norms, lo, hi);
    Ok(GradFlowReport {
        norms,
        rate,
        residual,
        fit_range: (lo, hi),
        spectral_radius: radius,
        capped_at: back.capped_at,
    })
}

/// Least-squares slope of `ln ‖δ_t‖` in `t`; `r = e^{−slope}`.
fn fit_rate(norms: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = (lo..=hi).map(|t| (t as f64, norms[t - 1])).collect();
    if pts.iter().any(|&(_, n)| !(n > 0.0)) {
        return (0.0, 0.0);
    }
    let pts: Vec<(f64, f64)> = pts.into_iter().map(|(t, n)| (t, n.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let rms = (pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum::<f64>()
        / k)
        .sqrt();
    ((-slope).exp(), rms)
}
