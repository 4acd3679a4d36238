//! Gated recurrent units: the fully gated unit and the minimal gated unit.
//!
//! ```text
//! r_t = sig(W_r h_{t−1} + U_r x_t + b_r)
//! z_t = sig(W_z h_{t−1} + U_z x_t + b_z)
//! h̃_t = tanh(W_c (r_t ⊙ h_{t−1}) + U_c x_t + b_c)
//! h_t = (1 − z_t) ⊙ h_{t−1} + z_t ⊙ h̃_t
//! ```
//!
//! The reset gate multiplies the previous state *before* `W_c`. The minimal
//! unit has a single forget gate `f_t` (same form as `r_t`) standing in for
//! both `r_t` and `z_t`.

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh, Real, Rng, Vector};
use crate::loss::{loss_and_output_grads, LossKind, Target};
use crate::model::{check_inputs, Affine, Evaluation, Model, Readout};
use crate::params::{zeros_like, Block, BlockMut, Bundle, Parameters};
use crate::reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GruVariant {
    FullyGated,
    Minimal,
}

impl GruVariant {
    pub fn name(self) -> &'static str {
        match self {
            GruVariant::FullyGated => "fully_gated",
            GruVariant::Minimal => "minimal",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "fully_gated" => Ok(GruVariant::FullyGated),
            "minimal" => Ok(GruVariant::Minimal),
            other => Err(Error::invalid(format!("unknown gru variant '{other}'"))),
        }
    }
}

/// Gate blocks by variant.
#[derive(Debug, Clone, PartialEq)]
pub enum GruGates {
    FullyGated { reset: Affine, update: Affine },
    Minimal { forget: Affine },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub gates: GruGates,
    pub candidate: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub x: Vector,
    /// `r_t`, or `f_t` in the minimal unit.
    pub r: Vector,
    /// `z_t`, or `f_t` in the minimal unit.
    pub z: Vector,
    /// `r_t ⊙ h_{t−1}`.
    pub gated_prev: Vector,
    pub candidate: Vector,
    pub h: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCellTrace {
    pub variant: GruVariant,
    pub steps: Vec<GruStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruTrace {
    pub cell: GruCellTrace,
    pub outputs: Vec<Vector>,
}

impl GruCell {
    pub fn zeros(variant: GruVariant, p: usize, d: usize) -> Self {
        let gates = match variant {
            GruVariant::FullyGated => GruGates::FullyGated {
                reset: Affine::zeros(p, d),
                update: Affine::zeros(p, d),
            },
            GruVariant::Minimal => GruGates::Minimal {
                forget: Affine::zeros(p, d),
            },
        };
        Self {
            gates,
            candidate: Affine::zeros(p, d),
        }
    }

    /// Uniform `±1/√p` recurrent and `±1/√d` input weights, zero biases.
    pub fn init(variant: GruVariant, p: usize, d: usize, rng: &mut Rng) -> Self {
        let gates = match variant {
            GruVariant::FullyGated => GruGates::FullyGated {
                reset: Affine::init(p, d, 0.0, rng),
                update: Affine::init(p, d, 0.0, rng),
            },
            GruVariant::Minimal => GruGates::Minimal {
                forget: Affine::init(p, d, 0.0, rng),
            },
        };
        Self {
            gates,
            candidate: Affine::init(p, d, 0.0, rng),
        }
    }

    pub fn variant(&self) -> GruVariant {
        match self.gates {
            GruGates::FullyGated { .. } => GruVariant::FullyGated,
            GruGates::Minimal { .. } => GruVariant::Minimal,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.candidate.b.len()
    }

    pub fn input_width(&self) -> usize {
        self.candidate.u.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, d) = (self.hidden_width(), self.input_width());
        self.candidate.check("W_c/U_c", p, d)?;
        match &self.gates {
            GruGates::FullyGated { reset, update } => {
                reset.check("W_r/U_r", p, d)?;
                update.check("W_z/U_z", p, d)
            }
            GruGates::Minimal { forget } => forget.check("W_f/U_f", p, d),
        }
    }

    pub fn forward_step(&self, h_prev: &Vector, x: &Vector) -> Result<GruStep> {
        let (p, d) = (self.hidden_width(), self.input_width());
        if h_prev.len() != p || x.len() != d {
            return Err(Error::Dimension {
                op: "gru step",
                left: (p, d),
                right: (h_prev.len(), x.len()),
            });
        }
        Ok(self.step_unchecked(h_prev, x))
    }

    fn step_unchecked(&self, h_prev: &Vector, x: &Vector) -> GruStep {
        let (r, z) = match &self.gates {
            GruGates::FullyGated { reset, update } => {
                (reset.apply(h_prev, x).map(sigmoid), update.apply(h_prev, x).map(sigmoid))
            }
            GruGates::Minimal { forget } => {
                let f = forget.apply(h_prev, x).map(sigmoid);
                (f.clone(), f)
            }
        };
        let gated_prev = r.zip_map(h_prev, |a, b| a * b);
        let candidate = self.candidate.apply(&gated_prev, x).map(tanh);
        let h = Vector::from_fn(h_prev.len(), |j| (1.0 - z[j]) * h_prev[j] + z[j] * candidate[j]);
        GruStep {
            x: x.clone(),
            r,
            z,
            gated_prev,
            candidate,
            h,
        }
    }

    pub fn run(&self, inputs: &[Vector]) -> Result<GruCellTrace> {
        check_inputs(inputs, self.input_width())?;
        let mut h = Vector::zeros(self.hidden_width());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let s = self.step_unchecked(&h, x);
            h = s.h.clone();
            steps.push(s);
        }
        Ok(GruCellTrace {
            variant: self.variant(),
            steps,
        })
    }

    /// Reverse pass from direct adjoints `dh_direct[t] = ∂L_t/∂h_t`; returns
    /// the total `∂L/∂h_t` per step.
    ///
    /// ```text
    /// δa_c = δh ⊙ z ⊙ (1 − h̃²)          δ(r ⊙ h_{t−1}) = W_cᵀ δa_c
    /// δz   = δh ⊙ (h̃ − h_{t−1})         δr = δ(r ⊙ h_{t−1}) ⊙ h_{t−1}
    /// δh_{t−1} = δh ⊙ (1 − z) + δ(r ⊙ h_{t−1}) ⊙ r + W_rᵀ δa_r + W_zᵀ δa_z
    /// ```
    ///
    /// In the minimal unit `δf = δr + δz` feeds the single gate.
    pub fn backward(
        &self,
        trace: &GruCellTrace,
        dh_direct: &[Vector],
        mut grads: Option<&mut GruCell>,
    ) -> Result<Vec<Vector>> {
        if trace.variant != self.variant() {
            return Err(Error::Mismatch("trace variant differs from cell variant".into()));
        }
        let n = trace.steps.len();
        let p = self.hidden_width();
        if dh_direct.len() != n {
            return Err(Error::Length {
                what: "direct adjoints",
                got: dh_direct.len(),
                expected: n,
            });
        }
        if trace.steps.iter().any(|s| s.h.len() != p || s.x.len() != self.input_width()) {
            return Err(Error::Mismatch("trace widths differ from cell widths".into()));
        }
        if let Some(g) = grads.as_deref() {
            if g.variant() != self.variant() || g.hidden_width() != p || g.input_width() != self.input_width() {
                return Err(Error::Mismatch("gradient layout differs from cell".into()));
            }
        }
        let zero = Vector::zeros(p);
        let mut carry = Vector::zeros(p);
        let mut totals = vec![Vector::zeros(p); n];
        for idx in (0..n).rev() {
            let s = &trace.steps[idx];
            let h_prev = if idx == 0 { &zero } else { &trace.steps[idx - 1].h };
            let mut dh = dh_direct[idx].clone();
            if dh.len() != p {
                return Err(Error::Dimension {
                    op: "direct adjoint",
                    left: (p, 1),
                    right: (dh.len(), 1),
                });
            }
            dh.add_assign(&carry);

            let da_c = Vector::from_fn(p, |j| dh[j] * s.z[j] * (1.0 - s.candidate[j] * s.candidate[j]));
            let d_gated = self.candidate.w.tr_mul_vec(&da_c);
            let dz = Vector::from_fn(p, |j| dh[j] * (s.candidate[j] - h_prev[j]));
            let dr = d_gated.zip_map(h_prev, |a, b| a * b);
            let mut prev = Vector::from_fn(p, |j| dh[j] * (1.0 - s.z[j]) + d_gated[j] * s.r[j]);

            let sig = |g: &Vector, dg: &Vector| Vector::from_fn(p, |j| dg[j] * g[j] * (1.0 - g[j]));
            match &self.gates {
                GruGates::FullyGated { reset, update } => {
                    let da_r = sig(&s.r, &dr);
                    let da_z = sig(&s.z, &dz);
                    reset.w.tr_mul_vec_acc(&da_r, &mut prev);
                    update.w.tr_mul_vec_acc(&da_z, &mut prev);
                    if let Some(GruCell {
                        gates: GruGates::FullyGated { reset, update },
                        ..
                    }) = grads.as_deref_mut()
                    {
                        reset.accumulate(&da_r, h_prev, &s.x);
                        update.accumulate(&da_z, h_prev, &s.x);
                    }
                }
                GruGates::Minimal { forget } => {
                    let da_f = sig(&s.z, &dr.add(&dz));
                    forget.w.tr_mul_vec_acc(&da_f, &mut prev);
                    if let Some(GruCell {
                        gates: GruGates::Minimal { forget },
                        ..
                    }) = grads.as_deref_mut()
                    {
                        forget.accumulate(&da_f, h_prev, &s.x);
                    }
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                g.candidate.accumulate(&da_c, &s.gated_prev, &s.x);
            }
            totals[idx] = dh;
            carry = prev;
        }
        Ok(totals)
    }

    pub(crate) fn prefixed_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        let mut out = Vec::new();
        match &self.gates {
            GruGates::FullyGated { reset, update } => {
                out.extend(reset.blocks(prefix, 'r'));
                out.extend(update.blocks(prefix, 'z'));
            }
            GruGates::Minimal { forget } => out.extend(forget.blocks(prefix, 'f')),
        }
        out.extend(self.candidate.blocks(prefix, 'c'));
        out
    }

    pub(crate) fn prefixed_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        let mut out = Vec::new();
        match &mut self.gates {
            GruGates::FullyGated { reset, update } => {
                out.extend(reset.blocks_mut(prefix, 'r'));
                out.extend(update.blocks_mut(prefix, 'z'));
            }
            GruGates::Minimal { forget } => out.extend(forget.blocks_mut(prefix, 'f')),
        }
        out.extend(self.candidate.blocks_mut(prefix, 'c'));
        out
    }
}

impl Parameters for GruCell {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.prefixed_blocks("")
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.prefixed_blocks_mut("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub cell: GruCell,
    pub readout: Readout,
}

pub type GruGradients = GruParams;

impl GruParams {
    pub fn new(cell: GruCell, readout: Readout) -> Result<Self> {
        cell.validate()?;
        if readout.hidden_width() != cell.hidden_width() {
            return Err(Error::Dimension {
                op: "readout",
                left: readout.v.shape(),
                right: (cell.hidden_width(), 1),
            });
        }
        Ok(Self { cell, readout })
    }

    pub fn init(variant: GruVariant, (p, d, q): (usize, usize, usize), rng: &mut Rng) -> Self {
        let cell = GruCell::init(variant, p, d, rng);
        Self {
            cell,
            readout: Readout::init(q, p, rng),
        }
    }

    pub fn zeros(variant: GruVariant, (p, d, q): (usize, usize, usize)) -> Self {
        Self {
            cell: GruCell::zeros(variant, p, d),
            readout: Readout::zeros(q, p),
        }
    }

    pub fn forward(&self, inputs: &[Vector]) -> Result<GruTrace> {
        let cell = self.cell.run(inputs)?;
        let outputs = cell.steps.iter().map(|s| self.readout.apply(&s.h)).collect();
        Ok(GruTrace { cell, outputs })
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new().header("variant", self.cell.variant().name());
        for block in self.cell.blocks() {
            b = b.matrix(block.name.clone(), &block_matrix(&self.cell, &block));
        }
        b.matrix("V", &self.readout.v).vector("b_y", &self.readout.b_y)
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let variant = GruVariant::from_name(bundle.get_header("variant")?)?;
        let (p, d) = bundle.get_matrix("U_c")?.shape();
        let mut cell = GruCell::zeros(variant, p, d);
        for block in cell.blocks_mut() {
            let m = bundle.get_matrix(&block.name)?;
            if m.as_slice().len() != block.values.len() {
                return Err(Error::parse(0, format!("section '{}' has the wrong size", block.name)));
            }
            block.values.copy_from_slice(m.as_slice());
        }
        Self::new(cell, Readout::new(bundle.get_matrix("V")?, bundle.get_vector("b_y")?)?)
    }
}

/// Shape a cell block as a matrix section: `W_*` is `p × p`, `U_*` is
/// `p × d`, biases are `1 × p`.
fn block_matrix(cell: &GruCell, block: &Block<'_>) -> crate::linalg::Matrix {
    let (p, d) = (cell.hidden_width(), cell.input_width());
    let (rows, cols) = match block.name.as_bytes()[0] {
        b'W' => (p, p),
        b'U' => (p, d),
        _ => (1, p),
    };
    crate::linalg::Matrix::from_vec(rows, cols, block.values.to_vec()).expect("block shape")
}

impl Parameters for GruParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = self.cell.blocks();
        out.extend(self.readout.blocks_named("V", "b_y"));
        out
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = self.cell.blocks_mut();
        out.extend(self.readout.blocks_named_mut("V", "b_y"));
        out
    }
}

/// Loss and gradient of one sequence.
pub fn gru_bptt(params: &GruParams, trace: &GruTrace, targets: &[Target], kind: LossKind) -> Result<(f64, GruGradients)> {
    let (loss, out_grads) = loss_and_output_grads(&trace.outputs, targets, kind)?;
    let mut grads = zeros_like(params);
    let direct: Vec<Vector> = out_grads
        .iter()
        .zip(&trace.cell.steps)
        .map(|(g, s)| params.readout.backward(g, &s.h, &mut grads.readout))
        .collect();
    params.cell.backward(&trace.cell, &direct, Some(&mut grads.cell))?;
    Ok((loss, grads))
}

impl Model for GruParams {
    fn input_width(&self) -> usize {
        self.cell.input_width()
    }

    fn output_width(&self) -> usize {
        self.readout.output_width()
    }

    fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        Ok(self.forward(inputs)?.outputs)
    }

    fn evaluate(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<Evaluation<Self>> {
        let trace = self.forward(inputs)?;
        let (loss, grads) = gru_bptt(self, &trace, targets, kind)?;
        Ok(Evaluation {
            loss,
            outputs: trace.outputs,
            grads,
        })
    }

    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R> {
        check_inputs(inputs, self.input_width())?;
        let n = reference::Named::new(self, flat)?;
        let hs = reference::gru_states(self.cell.variant(), self.cell.hidden_width(), &n, "", &reference::lift(inputs))?;
        let ys = hs
            .iter()
            .map(|h| reference::readout(&n, "V", "b_y", h))
            .collect::<Result<Vec<_>>>()?;
        reference::sequence_loss(&ys, targets, kind)
    }
}
