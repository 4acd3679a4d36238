//! Reverse-mode pass through the LSTM cell.
//!
//! Per step, with `a_g` the pre-activation of gate `g` and `δh`, `δc` the
//! total adjoints of `h_t`, `c_t`:
//!
//! ```text
//! δa_o = (δh ⊙ tanh c_t + ρ_o) ⊙ o(1 − o)
//! δc   = δh ⊙ o ⊙ (1 − tanh² c_t) + p_o ⊙ δa_o + κ_{t+1}
//! δa_i = (δc ⊙ c̃ + ρ_i) ⊙ i(1 − i)
//! δa_f = (δc ⊙ c_{t−1} + ρ_f) ⊙ f(1 − f)
//! δa_c = δc ⊙ i ⊙ (1 − c̃²)
//! ```
//!
//! Carried to step `t − 1`:
//!
//! ```text
//! δh_{t−1} ← Σ_g W_gᵀ δa_g
//! κ_t      = δc ⊙ f + p_i ⊙ δa_i + p_f ⊙ δa_f
//! ρ_b      = Σ_a R_abᵀ δa_a
//! ```
//!
//! The `p_o ⊙ δa_o` term is the output gate peeking at the same step's cell
//! state; the input and forget peepholes reach back one step through `κ`.

use super::{Gate, LstmCell, LstmCellTrace, LstmGradients, LstmParams, LstmTrace};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::loss::{loss_and_output_grads, LossKind, Target};
use crate::params::zeros_like;

/// Adjoints of the carried signals at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmAdjoints {
    /// Total `∂L/∂h_t`.
    pub dh: Vec<Vector>,
    /// Total `∂L/∂c_t`.
    pub dc: Vec<Vector>,
    /// `∂L/∂x_t`.
    pub dx: Vec<Vector>,
}

fn sig_deriv(s: &Vector) -> Vector {
    s.map(|v| v * (1.0 - v))
}

impl LstmCell {
    /// Backpropagates direct hidden-state adjoints `dh_direct[t]` (and,
    /// optionally, direct cell-state adjoints) through the whole sequence,
    /// accumulating parameter gradients into `grads` when given.
    pub fn backward(
        &self,
        trace: &LstmCellTrace,
        dh_direct: &[Vector],
        dc_direct: Option<&[Vector]>,
        mut grads: Option<&mut LstmCell>,
    ) -> Result<LstmAdjoints> {
        if trace.variant != self.variant {
            return Err(Error::Mismatch(format!(
                "trace variant {:?} vs cell variant {:?}",
                trace.variant, self.variant
            )));
        }
        let n = trace.len();
        let p = self.hidden_width();
        let d = self.input_width();
        if dh_direct.len() != n || dc_direct.is_some_and(|dc| dc.len() != n) {
            return Err(Error::Length {
                what: "direct adjoints",
                got: dh_direct.len(),
                expected: n,
            });
        }
        if trace.steps.iter().any(|s| s.h.len() != p || s.x.len() != d) {
            return Err(Error::Mismatch("trace widths differ from cell widths".into()));
        }
        if let Some(g) = grads.as_deref() {
            if g.variant != self.variant || g.hidden_width() != p || g.input_width() != d {
                return Err(Error::Mismatch("gradient layout differs from cell".into()));
            }
        }
        let zero = Vector::zeros(p);
        let mut dh_carry = Vector::zeros(p);
        let mut dc_carry = Vector::zeros(p);
        let mut gate_carry = [Vector::zeros(p), Vector::zeros(p), Vector::zeros(p)];
        let mut out = LstmAdjoints {
            dh: vec![Vector::zeros(p); n],
            dc: vec![Vector::zeros(p); n],
            dx: vec![Vector::zeros(d); n],
        };

        for idx in (0..n).rev() {
            let s = &trace.steps[idx];
            let prev = idx.checked_sub(1).map(|k| &trace.steps[k]);
            let h_prev = prev.map_or(&zero, |q| &q.h);
            let c_prev = prev.map_or(&zero, |q| &q.c);

            let mut dh = dh_direct[idx].clone();
            if dh.len() != p {
                return Err(Error::Dimension {
                    op: "direct adjoint",
                    left: (p, 1),
                    right: (dh.len(), 1),
                });
            }
            dh.add_assign(&dh_carry);

            let mut da_o = Vector::from_fn(p, |j| dh[j] * s.tanh_c[j] + gate_carry[Gate::Output as usize][j]);
            da_o = da_o.zip_map(&sig_deriv(&s.o), |a, b| a * b);

            let mut dc = Vector::from_fn(p, |j| dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_carry[j]);
            if let Some(extra) = dc_direct {
                dc.add_assign(&extra[idx]);
            }
            if let Some(po) = &self.peep_o {
                for j in 0..p {
                    dc[j] += po[j] * da_o[j];
                }
            }

            let da_i = Vector::from_fn(p, |j| {
                (dc[j] * s.candidate[j] + gate_carry[Gate::Input as usize][j]) * s.i[j] * (1.0 - s.i[j])
            });
            let da_f = self.forget.as_ref().map(|_| {
                Vector::from_fn(p, |j| {
                    (dc[j] * c_prev[j] + gate_carry[Gate::Forget as usize][j]) * s.f[j] * (1.0 - s.f[j])
                })
            });
            let da_c = Vector::from_fn(p, |j| dc[j] * s.i[j] * (1.0 - s.candidate[j] * s.candidate[j]));

            let pre: [(Gate, Option<&Vector>); 3] = [
                (Gate::Input, Some(&da_i)),
                (Gate::Forget, da_f.as_ref()),
                (Gate::Output, Some(&da_o)),
            ];

            // Carries into step idx − 1.
            let mut next_dh = self.candidate.w.tr_mul_vec(&da_c);
            let mut dx = self.candidate.u.tr_mul_vec(&da_c);
            for (g, da) in pre {
                if let (Some(da), Some(a)) = (da, self.affine(g)) {
                    a.w.tr_mul_vec_acc(da, &mut next_dh);
                    a.u.tr_mul_vec_acc(da, &mut dx);
                }
            }
            let mut next_dc = dc.zip_map(&s.f, |a, b| a * b);
            if let Some(pi) = &self.peep_i {
                for j in 0..p {
                    next_dc[j] += pi[j] * da_i[j];
                }
            }
            if let (Some(pf), Some(da_f)) = (&self.peep_f, &da_f) {
                for j in 0..p {
                    next_dc[j] += pf[j] * da_f[j];
                }
            }
            let mut next_gates = [Vector::zeros(p), Vector::zeros(p), Vector::zeros(p)];
            for ((to, from), r) in &self.recurrence {
                if let Some(da) = pre[*to as usize].1 {
                    r.tr_mul_vec_acc(da, &mut next_gates[*from as usize]);
                }
            }

            if let Some(g) = grads.as_deref_mut() {
                for (gate, da) in pre {
                    if let (Some(da), Some(a)) = (da, g.affine_mut(gate)) {
                        a.w.add_outer(da, h_prev);
                        a.u.add_outer(da, &s.x);
                        a.b.add_assign(da);
                    }
                }
                g.candidate.w.add_outer(&da_c, h_prev);
                g.candidate.u.add_outer(&da_c, &s.x);
                g.candidate.b.add_assign(&da_c);
                for (gate, da) in pre {
                    let peek = if gate == Gate::Output { &s.c } else { c_prev };
                    if let (Some(da), Some(pv)) = (da, g.peephole_mut(gate)) {
                        for j in 0..p {
                            pv[j] += da[j] * peek[j];
                        }
                    }
                }
                if let Some(prev) = prev {
                    for ((to, from), r) in g.recurrence.iter_mut() {
                        if let Some(da) = pre[*to as usize].1 {
                            r.add_outer(da, prev.gate(*from));
                        }
                    }
                }
            }

            out.dh[idx] = dh;
            out.dc[idx] = dc;
            out.dx[idx] = dx;
            dh_carry = next_dh;
            dc_carry = next_dc;
            gate_carry = next_gates;
        }
        Ok(out)
    }
}

/// Loss and gradient of every present parameter block.
pub fn lstm_bptt(
    params: &LstmParams,
    trace: &LstmTrace,
    targets: &[Target],
    kind: LossKind,
) -> Result<(f64, LstmGradients)> {
    let (loss, out_grads) = loss_and_output_grads(&trace.outputs, targets, kind)?;
    let mut grads = zeros_like(params);
    let direct: Vec<Vector> = match (&params.readout, &mut grads.readout) {
        (Some(r), Some(gr)) => out_grads
            .iter()
            .zip(&trace.cell.steps)
            .map(|(g, s)| r.backward(g, &s.h, gr))
            .collect(),
        _ => out_grads,
    };
    params.cell.backward(&trace.cell, &direct, None, Some(&mut grads.cell))?;
    Ok((loss, grads))
}
