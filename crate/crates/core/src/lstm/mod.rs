//! Long short-term memory with the historical variants behind flags.
//!
//! ```text
//! i_t = sig(W_i h_{t−1} + U_i x_t + p_i ⊙ c_{t−1} + b_i + Σ_b R_ib g_{b,t−1})
//! f_t = sig(W_f h_{t−1} + U_f x_t + p_f ⊙ c_{t−1} + b_f + Σ_b R_fb g_{b,t−1})
//! c̃_t = tanh(W_c h_{t−1} + U_c x_t + b_c)
//! c_t = f_t ⊙ c_{t−1} + i_t ⊙ c̃_t
//! o_t = sig(W_o h_{t−1} + U_o x_t + p_o ⊙ c_t + b_o + Σ_b R_ob g_{b,t−1})
//! h_t = o_t ⊙ tanh(c_t)
//! y_t = V h_t + b_y
//! ```
//!
//! The output gate peeks at the *current* cell state. Without a forget gate
//! `f_t ≡ 1` and the cell carries no forget parameters at all. The `R` terms
//! exist only under full gate recurrence and connect every present gate to
//! every present gate; gate values before the first step are zero.

mod backward;

use std::fmt;

pub use backward::{lstm_bptt, LstmAdjoints};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, tanh, Matrix, Real, Rng, Vector};
use crate::loss::{LossKind, Target};
use crate::model::{check_inputs, uniform_matrix, Affine, Evaluation, Model, Readout};
use crate::params::{Block, BlockMut, Bundle, Parameters};
use crate::reference;

/// The three sigmoid gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gate {
    Input,
    Forget,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::Input, Gate::Forget, Gate::Output];

    pub fn symbol(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Forget => 'f',
            Gate::Output => 'o',
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Structural switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LstmVariant {
    pub peepholes: bool,
    pub forget_gate: bool,
    pub full_gate_recurrence: bool,
}

impl LstmVariant {
    /// Input and output gates only.
    pub const ORIGINAL: Self = Self {
        peepholes: false,
        forget_gate: false,
        full_gate_recurrence: false,
    };
    /// Forget gate and peepholes.
    pub const VANILLA: Self = Self {
        peepholes: true,
        forget_gate: true,
        full_gate_recurrence: false,
    };
    pub const NO_PEEPHOLES: Self = Self {
        peepholes: false,
        forget_gate: true,
        full_gate_recurrence: false,
    };
    pub const FULL_GATE_RECURRENCE: Self = Self {
        peepholes: true,
        forget_gate: true,
        full_gate_recurrence: true,
    };

    /// `original`, `vanilla`, or `custom`.
    pub fn name(&self) -> &'static str {
        match *self {
            Self::ORIGINAL => "original",
            Self::VANILLA => "vanilla",
            _ => "custom",
        }
    }

    pub fn gates(&self) -> Vec<Gate> {
        Gate::ALL
            .into_iter()
            .filter(|&g| g != Gate::Forget || self.forget_gate)
            .collect()
    }

    /// `(to, from)` pairs of the gate-to-gate recurrence, in storage order.
    pub fn recurrence_pairs(&self) -> Vec<(Gate, Gate)> {
        if !self.full_gate_recurrence {
            return Vec::new();
        }
        let gates = self.gates();
        gates.iter().flat_map(|&a| gates.iter().map(move |&b| (a, b))).collect()
    }

    fn header_flag(on: bool) -> &'static str {
        if on {
            "1"
        } else {
            "0"
        }
    }
}

/// The recurrent cell: all gate blocks, no readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    variant: LstmVariant,
    pub input: Affine,
    /// Present iff the variant has a forget gate.
    pub forget: Option<Affine>,
    pub output: Affine,
    pub candidate: Affine,
    /// `(p_i, p_f, p_o)`; `p_f` follows the forget gate's presence.
    pub peep_i: Option<Vector>,
    pub peep_f: Option<Vector>,
    pub peep_o: Option<Vector>,
    /// `R_ab` for every pair in [`LstmVariant::recurrence_pairs`].
    pub recurrence: Vec<((Gate, Gate), Matrix)>,
}

/// Carried state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
    /// Previous `(i, f, o)`; `f` is all ones when there is no forget gate.
    pub gates: [Vector; 3],
}

impl LstmState {
    pub fn zeros(p: usize) -> Self {
        Self {
            h: Vector::zeros(p),
            c: Vector::zeros(p),
            gates: [Vector::zeros(p), Vector::zeros(p), Vector::zeros(p)],
        }
    }
}

/// One forward step, cached for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub x: Vector,
    pub i: Vector,
    /// All ones when the forget gate is off.
    pub f: Vector,
    pub o: Vector,
    pub candidate: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

impl LstmStep {
    pub fn gate(&self, g: Gate) -> &Vector {
        match g {
            Gate::Input => &self.i,
            Gate::Forget => &self.f,
            Gate::Output => &self.o,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellTrace {
    pub variant: LstmVariant,
    pub steps: Vec<LstmStep>,
}

impl LstmCellTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> Vec<Vector> {
        self.steps.iter().map(|s| s.h.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub cell: LstmCellTrace,
    pub outputs: Vec<Vector>,
}

impl LstmCell {
    pub fn zeros(variant: LstmVariant, p: usize, d: usize) -> Self {
        let peep = || variant.peepholes.then(|| Vector::zeros(p));
        Self {
            variant,
            input: Affine::zeros(p, d),
            forget: variant.forget_gate.then(|| Affine::zeros(p, d)),
            output: Affine::zeros(p, d),
            candidate: Affine::zeros(p, d),
            peep_i: peep(),
            peep_f: if variant.forget_gate { peep() } else { None },
            peep_o: peep(),
            recurrence: variant
                .recurrence_pairs()
                .into_iter()
                .map(|pair| (pair, Matrix::zeros(p, p)))
                .collect(),
        }
    }

    /// Uniform `±1/√p` (recurrent, peephole) and `±1/√d` (input) weights;
    /// zero biases except the forget gate's, which starts at +1.
    pub fn init(variant: LstmVariant, p: usize, d: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (p.max(1) as f64).sqrt();
        let input = Affine::init(p, d, 0.0, rng);
        let forget = variant.forget_gate.then(|| Affine::init(p, d, 1.0, rng));
        let output = Affine::init(p, d, 0.0, rng);
        let candidate = Affine::init(p, d, 0.0, rng);
        let mut peep = |on: bool| on.then(|| Vector::from_fn(p, |_| rng.uniform(-s, s)));
        let peep_i = peep(variant.peepholes);
        let peep_f = peep(variant.peepholes && variant.forget_gate);
        let peep_o = peep(variant.peepholes);
        let recurrence = variant
            .recurrence_pairs()
            .into_iter()
            .map(|pair| (pair, uniform_matrix(p, p, s, rng)))
            .collect();
        Self {
            variant,
            input,
            forget,
            output,
            candidate,
            peep_i,
            peep_f,
            peep_o,
            recurrence,
        }
    }

    /// Checks block presence against the variant and every shape.
    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        let p = self.hidden_width();
        let d = self.input_width();
        self.input.check("W_i/U_i", p, d)?;
        self.output.check("W_o/U_o", p, d)?;
        self.candidate.check("W_c/U_c", p, d)?;
        match (&self.forget, v.forget_gate) {
            (Some(f), true) => f.check("W_f/U_f", p, d)?,
            (None, false) => {}
            _ => return Err(Error::Mismatch("forget gate presence differs from variant".into())),
        }
        let want_pf = v.peepholes && v.forget_gate;
        for (peep, want) in [
            (&self.peep_i, v.peepholes),
            (&self.peep_f, want_pf),
            (&self.peep_o, v.peepholes),
        ] {
            match (peep, want) {
                (Some(pv), true) if pv.len() == p => {}
                (None, false) => {}
                _ => return Err(Error::Mismatch("peephole presence or width differs from variant".into())),
            }
        }
        let pairs: Vec<(Gate, Gate)> = self.recurrence.iter().map(|(pair, _)| *pair).collect();
        if pairs != v.recurrence_pairs() {
            return Err(Error::Mismatch("gate recurrence blocks differ from variant".into()));
        }
        if let Some((_, m)) = self.recurrence.iter().find(|(_, m)| m.shape() != (p, p)) {
            return Err(Error::Dimension {
                op: "gate recurrence",
                left: (p, p),
                right: m.shape(),
            });
        }
        Ok(())
    }

    pub fn variant(&self) -> LstmVariant {
        self.variant
    }

    pub fn hidden_width(&self) -> usize {
        self.input.b.len()
    }

    pub fn input_width(&self) -> usize {
        self.input.u.cols()
    }

    pub fn affine(&self, g: Gate) -> Option<&Affine> {
        match g {
            Gate::Input => Some(&self.input),
            Gate::Forget => self.forget.as_ref(),
            Gate::Output => Some(&self.output),
        }
    }

    pub(crate) fn affine_mut(&mut self, g: Gate) -> Option<&mut Affine> {
        match g {
            Gate::Input => Some(&mut self.input),
            Gate::Forget => self.forget.as_mut(),
            Gate::Output => Some(&mut self.output),
        }
    }

    pub fn peephole(&self, g: Gate) -> Option<&Vector> {
        match g {
            Gate::Input => self.peep_i.as_ref(),
            Gate::Forget => self.peep_f.as_ref(),
            Gate::Output => self.peep_o.as_ref(),
        }
    }

    pub(crate) fn peephole_mut(&mut self, g: Gate) -> Option<&mut Vector> {
        match g {
            Gate::Input => self.peep_i.as_mut(),
            Gate::Forget => self.peep_f.as_mut(),
            Gate::Output => self.peep_o.as_mut(),
        }
    }

    fn gate_pre(&self, g: Gate, prev: &LstmState, x: &Vector, peek: &Vector) -> Vector {
        let mut a = self.affine(g).expect("present gate").apply(&prev.h, x);
        if let Some(pv) = self.peephole(g) {
            for j in 0..a.len() {
                a[j] += pv[j] * peek[j];
            }
        }
        for ((to, from), r) in &self.recurrence {
            if *to == g {
                r.mul_vec_acc(&prev.gates[*from as usize], &mut a);
            }
        }
        a
    }

    /// One step from `prev`. Previous gate values are only read under full
    /// gate recurrence.
    pub fn forward_step(&self, prev: &LstmState, x: &Vector) -> Result<LstmStep> {
        let p = self.hidden_width();
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                op: "lstm input",
                left: self.input.u.shape(),
                right: (x.len(), 1),
            });
        }
        if prev.h.len() != p || prev.c.len() != p || prev.gates.iter().any(|g| g.len() != p) {
            return Err(Error::Dimension {
                op: "lstm state",
                left: (p, 1),
                right: (prev.h.len(), 1),
            });
        }
        Ok(self.step_unchecked(prev, x))
    }

    fn step_unchecked(&self, prev: &LstmState, x: &Vector) -> LstmStep {
        let i = self.gate_pre(Gate::Input, prev, x, &prev.c).map(sigmoid);
        let f = if self.variant.forget_gate {
            self.gate_pre(Gate::Forget, prev, x, &prev.c).map(sigmoid)
        } else {
            Vector::ones(i.len())
        };
        let candidate = self.candidate.apply(&prev.h, x).map(tanh);
        let c = Vector::from_fn(i.len(), |j| f[j] * prev.c[j] + i[j] * candidate[j]);
        let o = self.gate_pre(Gate::Output, prev, x, &c).map(sigmoid);
        let tanh_c = c.map(tanh);
        let h = o.zip_map(&tanh_c, |a, b| a * b);
        LstmStep {
            x: x.clone(),
            i,
            f,
            o,
            candidate,
            c,
            tanh_c,
            h,
        }
    }

    pub fn run(&self, inputs: &[Vector]) -> Result<LstmCellTrace> {
        check_inputs(inputs, self.input_width())?;
        let mut state = LstmState::zeros(self.hidden_width());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let step = self.step_unchecked(&state, x);
            state = LstmState {
                h: step.h.clone(),
                c: step.c.clone(),
                gates: [step.i.clone(), step.f.clone(), step.o.clone()],
            };
            steps.push(step);
        }
        Ok(LstmCellTrace {
            variant: self.variant,
            steps,
        })
    }

    pub(crate) fn prefixed_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        let mut out = Vec::new();
        for (sym, a) in self.affines() {
            out.push(Block::new(format!("{prefix}W_{sym}"), a.w.as_slice()));
            out.push(Block::new(format!("{prefix}U_{sym}"), a.u.as_slice()));
            out.push(Block::new(format!("{prefix}b_{sym}"), a.b.as_slice()));
        }
        for g in Gate::ALL {
            if let Some(pv) = self.peephole(g) {
                out.push(Block::new(format!("{prefix}p_{g}"), pv.as_slice()));
            }
        }
        for ((a, b), r) in &self.recurrence {
            out.push(Block::new(format!("{prefix}R_{a}{b}"), r.as_slice()));
        }
        out
    }

    pub(crate) fn prefixed_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        let mut out = Vec::new();
        let Self {
            input,
            forget,
            output,
            candidate,
            peep_i,
            peep_f,
            peep_o,
            recurrence,
            ..
        } = self;
        let affines = [('i', Some(input)), ('f', forget.as_mut()), ('o', Some(output)), ('c', Some(candidate))];
        for (sym, a) in affines {
            if let Some(a) = a {
                out.push(BlockMut::new(format!("{prefix}W_{sym}"), a.w.as_mut_slice()));
                out.push(BlockMut::new(format!("{prefix}U_{sym}"), a.u.as_mut_slice()));
                out.push(BlockMut::new(format!("{prefix}b_{sym}"), a.b.as_mut_slice()));
            }
        }
        for (sym, pv) in [('i', peep_i), ('f', peep_f), ('o', peep_o)] {
            if let Some(pv) = pv {
                out.push(BlockMut::new(format!("{prefix}p_{sym}"), pv.as_mut_slice()));
            }
        }
        for ((a, b), r) in recurrence {
            out.push(BlockMut::new(format!("{prefix}R_{a}{b}"), r.as_mut_slice()));
        }
        out
    }

    fn affines(&self) -> Vec<(char, &Affine)> {
        let mut out = vec![('i', &self.input)];
        if let Some(f) = &self.forget {
            out.push(('f', f));
        }
        out.push(('o', &self.output));
        out.push(('c', &self.candidate));
        out
    }

    pub(crate) fn header(&self, bundle: Bundle) -> Bundle {
        let v = self.variant;
        bundle
            .header("variant", v.name())
            .header("peepholes", LstmVariant::header_flag(v.peepholes))
            .header("forget", LstmVariant::header_flag(v.forget_gate))
            .header("fgr", LstmVariant::header_flag(v.full_gate_recurrence))
    }

    pub(crate) fn variant_from_header(bundle: &Bundle) -> Result<LstmVariant> {
        let flag = |key: &str| -> Result<bool> {
            match bundle.get_header(key)? {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(Error::parse(0, format!("header '{key}' must be 0 or 1, got '{other}'"))),
            }
        };
        Ok(LstmVariant {
            peepholes: flag("peepholes")?,
            forget_gate: flag("forget")?,
            full_gate_recurrence: flag("fgr")?,
        })
    }

    pub(crate) fn write_sections(&self, mut bundle: Bundle, prefix: &str) -> Bundle {
        for b in self.prefixed_blocks(prefix) {
            let m = self.block_matrix(&b.name[prefix.len()..]).expect("own block");
            bundle = bundle.matrix(b.name, &m);
        }
        bundle
    }

    fn block_matrix(&self, name: &str) -> Option<Matrix> {
        let vec_m = |v: &Vector| Matrix::from_vec(1, v.len(), v.to_vec()).expect("shape");
        let (kind, sym) = name.split_once('_')?;
        match kind {
            "W" | "U" | "b" => {
                let a = self.affines().into_iter().find(|(s, _)| s.to_string() == sym)?.1;
                Some(match kind {
                    "W" => a.w.clone(),
                    "U" => a.u.clone(),
                    _ => vec_m(&a.b),
                })
            }
            "p" => {
                let g = Gate::ALL.into_iter().find(|g| g.to_string() == sym)?;
                self.peephole(g).map(vec_m)
            }
            "R" => self
                .recurrence
                .iter()
                .find(|((a, b), _)| format!("{a}{b}") == sym)
                .map(|(_, m)| m.clone()),
            _ => None,
        }
    }

    pub(crate) fn read_sections(bundle: &Bundle, variant: LstmVariant, prefix: &str) -> Result<Self> {
        let u = bundle.get_matrix(&format!("{prefix}U_i"))?;
        let (p, d) = u.shape();
        let mut cell = Self::zeros(variant, p, d);
        for b in cell.prefixed_blocks_mut(prefix) {
            let m = bundle.get_matrix(&b.name)?;
            if m.as_slice().len() != b.values.len() {
                return Err(Error::parse(0, format!("section '{}' has the wrong size", b.name)));
            }
            b.values.copy_from_slice(m.as_slice());
        }
        cell.validate()?;
        Ok(cell)
    }
}

impl Parameters for LstmCell {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.prefixed_blocks("")
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.prefixed_blocks_mut("")
    }
}

/// Cell plus output layer. `readout: None` means `y_t = h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub cell: LstmCell,
    pub readout: Option<Readout>,
}

pub type LstmGradients = LstmParams;

impl LstmParams {
    pub fn new(cell: LstmCell, readout: Option<Readout>) -> Result<Self> {
        cell.validate()?;
        if let Some(r) = &readout {
            if r.hidden_width() != cell.hidden_width() {
                return Err(Error::Dimension {
                    op: "readout",
                    left: r.v.shape(),
                    right: (cell.hidden_width(), 1),
                });
            }
        }
        Ok(Self { cell, readout })
    }

    pub fn init(variant: LstmVariant, (p, d, q): (usize, usize, usize), rng: &mut Rng) -> Self {
        let cell = LstmCell::init(variant, p, d, rng);
        let readout = Readout::init(q, p, rng);
        Self {
            cell,
            readout: Some(readout),
        }
    }

    /// Output equal to the hidden state (`V = I`, `b_y = 0`, not trained).
    pub fn init_identity_output(variant: LstmVariant, p: usize, d: usize, rng: &mut Rng) -> Self {
        Self {
            cell: LstmCell::init(variant, p, d, rng),
            readout: None,
        }
    }

    pub fn zeros(variant: LstmVariant, (p, d, q): (usize, usize, usize)) -> Self {
        Self {
            cell: LstmCell::zeros(variant, p, d),
            readout: Some(Readout::zeros(q, p)),
        }
    }

    pub fn forward(&self, inputs: &[Vector]) -> Result<LstmTrace> {
        let cell = self.cell.run(inputs)?;
        let outputs = cell
            .steps
            .iter()
            .map(|s| match &self.readout {
                Some(r) => r.apply(&s.h),
                None => s.h.clone(),
            })
            .collect();
        Ok(LstmTrace { cell, outputs })
    }

    pub fn to_bundle(&self) -> Bundle {
        let output = if self.readout.is_some() { "linear" } else { "identity" };
        let b = self.cell.header(Bundle::new()).header("output", output);
        let b = self.cell.write_sections(b, "");
        match &self.readout {
            Some(r) => b.matrix("V", &r.v).vector("b_y", &r.b_y),
            None => b,
        }
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let variant = LstmCell::variant_from_header(bundle)?;
        let cell = LstmCell::read_sections(bundle, variant, "")?;
        let readout = match bundle.get_header("output").unwrap_or("linear") {
            "linear" => Some(Readout::new(bundle.get_matrix("V")?, bundle.get_vector("b_y")?)?),
            "identity" => None,
            other => return Err(Error::parse(0, format!("unknown output mode '{other}'"))),
        };
        Self::new(cell, readout)
    }
}

impl Parameters for LstmParams {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = self.cell.blocks();
        if let Some(r) = &self.readout {
            out.extend(r.blocks_named("V", "b_y"));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = self.cell.blocks_mut();
        if let Some(r) = &mut self.readout {
            out.extend(r.blocks_named_mut("V", "b_y"));
        }
        out
    }
}

impl Model for LstmParams {
    fn input_width(&self) -> usize {
        self.cell.input_width()
    }

    fn output_width(&self) -> usize {
        self.readout
            .as_ref()
            .map_or(self.cell.hidden_width(), Readout::output_width)
    }

    fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        Ok(self.forward(inputs)?.outputs)
    }

    fn evaluate(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<Evaluation<Self>> {
        let trace = self.forward(inputs)?;
        let (loss, grads) = lstm_bptt(self, &trace, targets, kind)?;
        Ok(Evaluation {
            loss,
            outputs: trace.outputs,
            grads,
        })
    }

    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R> {
        check_inputs(inputs, self.input_width())?;
        let n = reference::Named::new(self, flat)?;
        let hs = reference::lstm_states(self.cell.variant, self.cell.hidden_width(), &n, "", &reference::lift(inputs))?;
        let ys = match self.readout {
            Some(_) => hs
                .iter()
                .map(|h| reference::readout(&n, "V", "b_y", h))
                .collect::<Result<Vec<_>>>()?,
            None => hs,
        };
        reference::sequence_loss(&ys, targets, kind)
    }
}
