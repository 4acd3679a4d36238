//! Backpropagation through time for [`RnnCell`] and [`RnnParams`].
//!
//! Column-vector convention throughout. With `δ_t = ∂L/∂h_t` (total, through
//! every later step) and `e_t = ∂L/∂i_t`:
//!
//! ```text
//! e_t = δ_t ⊙ s ⊙ φ'(i_t)                    s = 1/τ for leaky cells, else 1
//! δ_t = Vᵀ g_t + Σ_k W_kᵀ e_{t+k}
//!       + e_{t+1}                             (identity-plus)
//!       + (1 − 1/τ) ⊙ δ_{t+1}                 (leaky)
//! dW_k = Σ_t e_t h_{t−k}ᵀ    dU = Σ_t e_t x_tᵀ    db_i = Σ_t e_t
//! ```

use super::{CellTrace, RnnCell, RnnGradients, RnnParams, RnnTrace, RnnVariant};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::loss::{loss_and_output_grads, LossKind, Target};
use crate::params::zeros_like;

/// Adjoints produced by [`RnnCell::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellBackward {
    /// `∂L/∂h_t` for `t = 1 … T`.
    pub deltas: Vec<Vector>,
    /// `∂L/∂i_t`.
    pub pre_grads: Vec<Vector>,
    /// `∂L/∂x_t = Uᵀ e_t`.
    pub input_grads: Vec<Vector>,
    /// Latest (1-based) step whose adjoint norm hit the cap, if any.
    pub capped_at: Option<usize>,
}

impl RnnCell {
    /// Runs the adjoint recursion given the direct contributions
    /// `direct[t] = ∂L_t/∂h_t`, accumulating parameter gradients into `grads`
    /// when supplied. With `cap`, any `δ_t` whose norm exceeds it is rescaled
    /// to norm `cap` and the step is reported.
    pub fn backward(
        &self,
        trace: &CellTrace,
        direct: &[Vector],
        mut grads: Option<&mut RnnCell>,
        cap: Option<f64>,
    ) -> Result<CellBackward> {
        self.check_trace(trace)?;
        let n = trace.len();
        if direct.len() != n {
            return Err(Error::Length {
                what: "direct adjoints",
                got: direct.len(),
                expected: n,
            });
        }
        let p = self.hidden_width();
        if let Some(g) = grads.as_deref() {
            if g.delays() != self.delays() || g.hidden_width() != p || g.input_width() != self.input_width() {
                return Err(Error::Mismatch("gradient layout differs from cell".into()));
            }
        }
        let inv_tau = match &self.variant {
            RnnVariant::Leaky(cfg) => Some(cfg.tau().map(|t| 1.0 / t)),
            _ => None,
        };

        let mut deltas = vec![Vector::zeros(p); n];
        let mut pre_grads = vec![Vector::zeros(p); n];
        let mut capped_at = None;

        for t in (1..=n).rev() {
            let idx = t - 1;
            let mut delta = direct[idx].clone();
            if delta.len() != p {
                return Err(Error::Dimension {
                    op: "direct adjoint",
                    left: (p, 1),
                    right: (delta.len(), 1),
                });
            }
            for (&k, w) in &self.recurrent {
                if let Some(e) = pre_grads.get(idx + k) {
                    w.tr_mul_vec_acc(e, &mut delta);
                }
            }
            if t < n {
                match (&self.variant, &inv_tau) {
                    (RnnVariant::IdentityPlus, _) => delta.add_assign(&pre_grads[idx + 1]),
                    (RnnVariant::Leaky(_), Some(inv)) => {
                        let next = &deltas[idx + 1];
                        for j in 0..p {
                            delta[j] += (1.0 - inv[j]) * next[j];
                        }
                    }
                    _ => {}
                }
            }
            if let Some(cap) = cap {
                let norm = delta.norm();
                if norm > cap || !norm.is_finite() {
                    capped_at.get_or_insert(t);
                    delta = if norm.is_finite() {
                        delta.scale(cap / norm)
                    } else {
                        Vector::filled(p, cap / (p.max(1) as f64).sqrt())
                    };
                }
            }
            let step = &trace.steps[idx];
            let e = Vector::from_fn(p, |j| {
                let s = inv_tau.as_ref().map_or(1.0, |inv| inv[j]);
                delta[j] * s * self.activation.derivative_from_value(step.act[j])
            });
            pre_grads[idx] = e;
            deltas[idx] = delta;
        }

        let input_grads = pre_grads.iter().map(|e| self.u.tr_mul_vec(e)).collect();

        if let Some(g) = grads.as_deref_mut() {
            for t in 1..=n {
                let e = &pre_grads[t - 1];
                for (&k, dw) in g.recurrent.iter_mut() {
                    if let Some(h) = trace.state_before(t, k) {
                        dw.add_outer(e, h);
                    }
                }
                g.u.add_outer(e, &trace.steps[t - 1].x);
                g.b_i.add_assign(e);
            }
        }

        Ok(CellBackward {
            deltas,
            pre_grads,
            input_grads,
            capped_at,
        })
    }
}

/// Loss and full parameter gradient of one sequence.
pub fn bptt(params: &RnnParams, trace: &RnnTrace, targets: &[Target], kind: LossKind) -> Result<(f64, RnnGradients)> {
    let (loss, out_grads) = loss_and_output_grads(&trace.outputs, targets, kind)?;
    let mut grads = zeros_like(params);
    let direct: Vec<Vector> = out_grads
        .iter()
        .zip(&trace.cell.steps)
        .map(|(g, s)| params.readout.backward(g, &s.h, &mut grads.readout))
        .collect();
    params.cell.backward(&trace.cell, &direct, Some(&mut grads.cell), None)?;
    Ok((loss, grads))
}
