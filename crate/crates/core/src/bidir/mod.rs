//! Bidirectional networks: one recurrence reads the sequence left to right,
//! another right to left, and the two state sequences are fused per step.
//!
//! ```text
//! →h_t = cell_fwd(→h_{t−1}, x_t)        →h_0 = 0
//! ←h_t = cell_bwd(←h_{t+1}, x_t)        ←h_{T+1} = 0
//! y_t  = →V →h_t + ←V ←h_t + b_y
//! ```

mod elmo;

pub use elmo::ElmoStack;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng, Vector};
use crate::loss::{loss_and_output_grads, LossKind, Target};
use crate::lstm::{LstmCell, LstmCellTrace, LstmVariant};
use crate::model::{check_inputs, uniform_matrix, Evaluation, Model};
use crate::params::{zeros_like, Block, BlockMut, Bundle, Parameters};
use crate::reference::{self, Named};
use crate::rnn::{CellTrace, InitScheme, RnnCell, RnnVariant};

pub(crate) const FWD: &str = "fwd/";
pub(crate) const BWD: &str = "bwd/";

/// Recurrence used by one direction.
#[derive(Debug, Clone, PartialEq)]
pub enum DirCell {
    Rnn(RnnCell),
    Lstm(LstmCell),
}

/// Trace of one direction, in that direction's own reading order.
#[derive(Debug, Clone, PartialEq)]
pub enum DirTrace {
    Rnn(CellTrace),
    Lstm(LstmCellTrace),
}

impl DirTrace {
    pub fn len(&self) -> usize {
        match self {
            DirTrace::Rnn(t) => t.len(),
            DirTrace::Lstm(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// States in reading order.
    pub fn states(&self) -> Vec<Vector> {
        match self {
            DirTrace::Rnn(t) => t.states(),
            DirTrace::Lstm(t) => t.states(),
        }
    }
}

impl DirCell {
    pub fn kind(&self) -> &'static str {
        match self {
            DirCell::Rnn(_) => "rnn",
            DirCell::Lstm(_) => "lstm",
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self {
            DirCell::Rnn(c) => c.hidden_width(),
            DirCell::Lstm(c) => c.hidden_width(),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            DirCell::Rnn(c) => c.input_width(),
            DirCell::Lstm(c) => c.input_width(),
        }
    }

    pub fn run(&self, inputs: &[Vector]) -> Result<DirTrace> {
        Ok(match self {
            DirCell::Rnn(c) => DirTrace::Rnn(c.run(inputs)?),
            DirCell::Lstm(c) => DirTrace::Lstm(c.run(inputs)?),
        })
    }

    /// Backpropagates `direct[s] = ∂L/∂h_s` (reading order), accumulating
    /// into `grads`, and returns the input adjoints in reading order.
    pub fn backward(&self, trace: &DirTrace, direct: &[Vector], grads: &mut DirCell) -> Result<Vec<Vector>> {
        match (self, trace, grads) {
            (DirCell::Rnn(c), DirTrace::Rnn(t), DirCell::Rnn(g)) => Ok(c.backward(t, direct, Some(g), None)?.input_grads),
            (DirCell::Lstm(c), DirTrace::Lstm(t), DirCell::Lstm(g)) => Ok(c.backward(t, direct, None, Some(g))?.dx),
            _ => Err(Error::Mismatch("direction cell, trace and gradient kinds differ".into())),
        }
    }

    fn same_structure(&self, other: &DirCell) -> bool {
        match (self, other) {
            (DirCell::Rnn(a), DirCell::Rnn(b)) => {
                a.variant().name() == b.variant().name()
                    && a.activation() == b.activation()
                    && a.delays() == b.delays()
            }
            (DirCell::Lstm(a), DirCell::Lstm(b)) => a.variant() == b.variant(),
            _ => false,
        }
    }

    pub(crate) fn prefixed_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        match self {
            DirCell::Rnn(c) => c.prefixed_blocks(prefix),
            DirCell::Lstm(c) => c.prefixed_blocks(prefix),
        }
    }

    pub(crate) fn prefixed_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        match self {
            DirCell::Rnn(c) => c.prefixed_blocks_mut(prefix),
            DirCell::Lstm(c) => c.prefixed_blocks_mut(prefix),
        }
    }

    pub(crate) fn write_sections(&self, bundle: Bundle, prefix: &str) -> Bundle {
        match self {
            DirCell::Rnn(c) => c.write_sections(bundle, prefix),
            DirCell::Lstm(c) => c.write_sections(bundle, prefix),
        }
    }

    fn header(&self, bundle: Bundle) -> Bundle {
        let bundle = bundle.header("kind", self.kind());
        match self {
            DirCell::Rnn(c) => bundle
                .header("variant", c.variant().name())
                .header("activation", c.activation().name()),
            DirCell::Lstm(c) => c.header(bundle),
        }
    }

    fn read_sections(bundle: &Bundle, prefix: &str) -> Result<Self> {
        match bundle.get_header("kind")? {
            "rnn" => Ok(DirCell::Rnn(RnnCell::read_sections(
                bundle,
                bundle.get_header("variant")?,
                bundle.get_header("activation")?,
                prefix,
            )?)),
            "lstm" => Ok(DirCell::Lstm(LstmCell::read_sections(
                bundle,
                LstmCell::variant_from_header(bundle)?,
                prefix,
            )?)),
            other => Err(Error::parse(0, format!("unknown cell kind '{other}'"))),
        }
    }

    /// Reference states in reading order.
    pub(crate) fn reference_states<R: Real>(&self, n: &Named<'_, R>, prefix: &str, xs: &[Vec<R>]) -> Result<Vec<Vec<R>>> {
        match self {
            DirCell::Rnn(c) => reference::rnn_states(&c.reference_shape(), n, prefix, xs),
            DirCell::Lstm(c) => reference::lstm_states(c.variant(), c.hidden_width(), n, prefix, xs),
        }
    }
}

/// The two directions over one sequence, without any output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirEncoder {
    pub fwd: DirCell,
    pub bwd: DirCell,
}

/// Forward and backward traces of an encoder pass. The backward trace is
/// held in its own (reversed) reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    pub fwd: DirTrace,
    pub bwd: DirTrace,
}

impl EncoderTrace {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    /// `→h_1 … →h_T`.
    pub fn forward_states(&self) -> Vec<Vector> {
        self.fwd.states()
    }

    /// `←h_1 … ←h_T`, re-indexed to sequence time.
    pub fn backward_states(&self) -> Vec<Vector> {
        let mut s = self.bwd.states();
        s.reverse();
        s
    }

    /// `[→h_t; ←h_t]` for every step.
    pub fn concatenated(&self) -> Vec<Vector> {
        self.forward_states()
            .iter()
            .zip(self.backward_states())
            .map(|(f, b)| f.concat(&b))
            .collect()
    }
}

impl BidirEncoder {
    pub fn new(fwd: DirCell, bwd: DirCell) -> Result<Self> {
        if !fwd.same_structure(&bwd) {
            return Err(Error::invalid("both directions must use the same cell kind and variant"));
        }
        if fwd.hidden_width() != bwd.hidden_width() || fwd.input_width() != bwd.input_width() {
            return Err(Error::Dimension {
                op: "bidirectional cells",
                left: (fwd.hidden_width(), fwd.input_width()),
                right: (bwd.hidden_width(), bwd.input_width()),
            });
        }
        Ok(Self { fwd, bwd })
    }

    pub fn hidden_width(&self) -> usize {
        self.fwd.hidden_width()
    }

    pub fn input_width(&self) -> usize {
        self.fwd.input_width()
    }

    pub fn kind(&self) -> &'static str {
        self.fwd.kind()
    }

    pub fn run(&self, inputs: &[Vector]) -> Result<EncoderTrace> {
        check_inputs(inputs, self.input_width())?;
        let reversed: Vec<Vector> = inputs.iter().rev().cloned().collect();
        let (fwd, bwd) = rayon::join(|| self.fwd.run(inputs), || self.bwd.run(&reversed));
        Ok(EncoderTrace { fwd: fwd?, bwd: bwd? })
    }

    /// Backpropagates per-step adjoints of `→h_t` and `←h_t` (both in
    /// sequence time) and returns `∂L/∂x_t`.
    pub fn backward(
        &self,
        trace: &EncoderTrace,
        d_fwd: &[Vector],
        d_bwd: &[Vector],
        grads: &mut BidirEncoder,
    ) -> Result<Vec<Vector>> {
        let rev: Vec<Vector> = d_bwd.iter().rev().cloned().collect();
        let dx_f = self.fwd.backward(&trace.fwd, d_fwd, &mut grads.fwd)?;
        let mut dx_b = self.bwd.backward(&trace.bwd, &rev, &mut grads.bwd)?;
        dx_b.reverse();
        Ok(dx_f.iter().zip(&dx_b).map(|(a, b)| a.add(b)).collect())
    }

    pub(crate) fn prefixed_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        let mut out = self.fwd.prefixed_blocks(&format!("{prefix}{FWD}"));
        out.extend(self.bwd.prefixed_blocks(&format!("{prefix}{BWD}")));
        out
    }

    pub(crate) fn prefixed_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        let mut out = self.fwd.prefixed_blocks_mut(&format!("{prefix}{FWD}"));
        out.extend(self.bwd.prefixed_blocks_mut(&format!("{prefix}{BWD}")));
        out
    }

    pub(crate) fn write_sections(&self, bundle: Bundle, prefix: &str) -> Bundle {
        let bundle = self.fwd.write_sections(bundle, &format!("{prefix}{FWD}"));
        self.bwd.write_sections(bundle, &format!("{prefix}{BWD}"))
    }

    pub(crate) fn read_sections(bundle: &Bundle, prefix: &str) -> Result<Self> {
        Self::new(
            DirCell::read_sections(bundle, &format!("{prefix}{FWD}"))?,
            DirCell::read_sections(bundle, &format!("{prefix}{BWD}"))?,
        )
    }

    /// Reference `(→h, ←h)` in sequence time.
    pub(crate) fn reference_states<R: Real>(
        &self,
        n: &Named<'_, R>,
        prefix: &str,
        xs: &[Vec<R>],
    ) -> Result<(Vec<Vec<R>>, Vec<Vec<R>>)> {
        let f = self.fwd.reference_states(n, &format!("{prefix}{FWD}"), xs)?;
        let rev: Vec<Vec<R>> = xs.iter().rev().cloned().collect();
        let mut b = self.bwd.reference_states(n, &format!("{prefix}{BWD}"), &rev)?;
        b.reverse();
        Ok((f, b))
    }
}

/// Per-step fusion `y_t = →V →h_t + ←V ←h_t + b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub v_fwd: Matrix,
    pub v_bwd: Matrix,
    pub b_y: Vector,
}

impl Fusion {
    pub fn new(v_fwd: Matrix, v_bwd: Matrix, b_y: Vector) -> Result<Self> {
        if v_fwd.shape() != v_bwd.shape() || v_fwd.rows() != b_y.len() {
            return Err(Error::Dimension {
                op: "fusion",
                left: v_fwd.shape(),
                right: v_bwd.shape(),
            });
        }
        Ok(Self { v_fwd, v_bwd, b_y })
    }

    pub fn init(q: usize, p: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (p.max(1) as f64).sqrt();
        Self {
            v_fwd: uniform_matrix(q, p, s, rng),
            v_bwd: uniform_matrix(q, p, s, rng),
            b_y: Vector::zeros(q),
        }
    }

    pub fn zeros(q: usize, p: usize) -> Self {
        Self {
            v_fwd: Matrix::zeros(q, p),
            v_bwd: Matrix::zeros(q, p),
            b_y: Vector::zeros(q),
        }
    }

    pub fn apply(&self, hf: &Vector, hb: &Vector) -> Vector {
        let mut y = self.b_y.clone();
        self.v_fwd.mul_vec_acc(hf, &mut y);
        self.v_bwd.mul_vec_acc(hb, &mut y);
        y
    }
}

/// Bidirectional network with a fused linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirParams {
    pub encoder: BidirEncoder,
    pub fusion: Fusion,
}

pub type BidirGradients = BidirParams;

/// Encoder trace plus fused outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BidirTrace {
    pub encoder: EncoderTrace,
    pub outputs: Vec<Vector>,
}

impl BidirParams {
    pub fn new(encoder: BidirEncoder, fusion: Fusion) -> Result<Self> {
        if fusion.v_fwd.cols() != encoder.hidden_width() {
            return Err(Error::Dimension {
                op: "fusion",
                left: fusion.v_fwd.shape(),
                right: (encoder.hidden_width(), 1),
            });
        }
        Ok(Self { encoder, fusion })
    }

    pub fn rnn(
        variant: RnnVariant,
        delays: &[usize],
        (p, d, q): (usize, usize, usize),
        scheme: &InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fwd = RnnCell::init(variant.clone(), delays, p, d, scheme, rng)?;
        let bwd = RnnCell::init(variant, delays, p, d, scheme, rng)?;
        Self::new(
            BidirEncoder::new(DirCell::Rnn(fwd), DirCell::Rnn(bwd))?,
            Fusion::init(q, p, rng),
        )
    }

    pub fn lstm(variant: LstmVariant, (p, d, q): (usize, usize, usize), rng: &mut Rng) -> Result<Self> {
        let fwd = LstmCell::init(variant, p, d, rng);
        let bwd = LstmCell::init(variant, p, d, rng);
        Self::new(
            BidirEncoder::new(DirCell::Lstm(fwd), DirCell::Lstm(bwd))?,
            Fusion::init(q, p, rng),
        )
    }

    pub fn forward(&self, inputs: &[Vector]) -> Result<BidirTrace> {
        let encoder = self.encoder.run(inputs)?;
        let outputs = encoder
            .forward_states()
            .iter()
            .zip(encoder.backward_states())
            .map(|(f, b)| self.fusion.apply(f, &b))
            .collect();
        Ok(BidirTrace { encoder, outputs })
    }

    pub fn to_bundle(&self) -> Bundle {
        let b = self.encoder.fwd.header(Bundle::new());
        self.encoder
            .write_sections(b, "")
            .matrix("V_fwd", &self.fusion.v_fwd)
            .matrix("V_bwd", &self.fusion.v_bwd)
            .vector("b_y", &self.fusion.b_y)
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let encoder = BidirEncoder::read_sections(bundle, "")?;
        let fusion = Fusion::new(
            bundle.get_matrix("V_fwd")?,
            bundle.get_matrix("V_bwd")?,
            bundle.get_vector("b_y")?,
        )?;
        Self::new(encoder, fusion)
    }
}

/// Loss and gradient of every block of a bidirectional network.
pub fn bidir_bptt(
    params: &BidirParams,
    trace: &BidirTrace,
    targets: &[Target],
    kind: LossKind,
) -> Result<(f64, BidirGradients)> {
    let (loss, out_grads) = loss_and_output_grads(&trace.outputs, targets, kind)?;
    let mut grads = zeros_like(params);
    let hf = trace.encoder.forward_states();
    let hb = trace.encoder.backward_states();
    let mut d_fwd = Vec::with_capacity(out_grads.len());
    let mut d_bwd = Vec::with_capacity(out_grads.len());
    for (t, g) in out_grads.iter().enumerate() {
        grads.fusion.v_fwd.add_outer(g, &hf[t]);
        grads.fusion.v_bwd.add_outer(g, &hb[t]);
        grads.fusion.b_y.add_assign(g);
        d_fwd.push(params.fusion.v_fwd.tr_mul_vec(g));
        d_bwd.push(params.fusion.v_bwd.tr_mul_vec(g));
    }
    params
        .encoder
        .backward(&trace.encoder, &d_fwd, &d_bwd, &mut grads.encoder)?;
    Ok((loss, grads))
}

impl Parameters for BidirParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = self.encoder.prefixed_blocks("");
        out.push(Block::new("V_fwd", self.fusion.v_fwd.as_slice()));
        out.push(Block::new("V_bwd", self.fusion.v_bwd.as_slice()));
        out.push(Block::new("b_y", self.fusion.b_y.as_slice()));
        out
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = self.encoder.prefixed_blocks_mut("");
        out.push(BlockMut::new("V_fwd", self.fusion.v_fwd.as_mut_slice()));
        out.push(BlockMut::new("V_bwd", self.fusion.v_bwd.as_mut_slice()));
        out.push(BlockMut::new("b_y", self.fusion.b_y.as_mut_slice()));
        out
    }
}

impl Model for BidirParams {
    fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    fn output_width(&self) -> usize {
        self.fusion.b_y.len()
    }

    fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        Ok(self.forward(inputs)?.outputs)
    }

    fn evaluate(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<Evaluation<Self>> {
        let trace = self.forward(inputs)?;
        let (loss, grads) = bidir_bptt(self, &trace, targets, kind)?;
        Ok(Evaluation {
            loss,
            outputs: trace.outputs,
            grads,
        })
    }

    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R> {
        check_inputs(inputs, self.input_width())?;
        let n = Named::new(self, flat)?;
        let (hf, hb) = self.encoder.reference_states(&n, "", &reference::lift(inputs))?;
        let (vf, vb, b) = (n.get("V_fwd")?, n.get("V_bwd")?, n.get("b_y")?);
        let ys: Vec<Vec<R>> = hf
            .iter()
            .zip(&hb)
            .map(|(f, h)| reference::add(&reference::add(&reference::mv(vf, f), &reference::mv(vb, h)), b))
            .collect();
        reference::sequence_loss(&ys, targets, kind)
    }
}

#[cfg(test)]
mod tests;
