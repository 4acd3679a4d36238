//! Vanilla recurrent network and its gradient-preserving variants.
//!
//! ```text
//! i_t = Σ_k W_k h_{t−k} + U x_t + b_i
//! h_t = tanh(i_t)
//! y_t = V h_t + b_y
//! ```
//!
//! The plain network is the delay set `{1}`. On top of any delay set the
//! cell can add the previous state directly (`(W + I) h_{t−1}`), or blend
//! each unit with its own past through a time constant τ_j ≥ 1:
//! `h_{t,j} = (1 − 1/τ_j) h_{t−1,j} + (1/τ_j) tanh(i_{t,j})`.
//!
//! States before the first step are zero vectors.

mod backward;
mod init;

use std::collections::BTreeMap;

pub use backward::{bptt, CellBackward};
pub use init::{init_weights, InitScheme};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng, Vector};
use crate::loss::{LossKind, Target};
use crate::model::{check_inputs, uniform_matrix, Evaluation, Model, Readout};
use crate::params::{Block, BlockMut, Bundle, Parameters};
use crate::reference;

/// Per-unit time constants of a leaky cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakyConfig {
    tau: Vector,
}

impl LeakyConfig {
    pub fn new(tau: Vector) -> Result<Self> {
        if let Some(bad) = tau.iter().find(|&&t| !(t >= 1.0) || !t.is_finite()) {
            return Err(Error::invalid(format!("leaky time constants must satisfy 1 <= tau < inf, got {bad}")));
        }
        Ok(Self { tau })
    }

    pub fn uniform(p: usize, tau: f64) -> Result<Self> {
        Self::new(Vector::filled(p, tau))
    }

    pub fn tau(&self) -> &Vector {
        &self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RnnVariant {
    Vanilla,
    /// Adds `h_{t−1}` to the tanh argument, i.e. uses `W + I`.
    IdentityPlus,
    Leaky(LeakyConfig),
}

impl RnnVariant {
    pub fn name(&self) -> &'static str {
        match self {
            RnnVariant::Vanilla => "vanilla",
            RnnVariant::IdentityPlus => "identity_plus",
            RnnVariant::Leaky(_) => "leaky",
        }
    }
}

/// Nonlinearity applied to the state pre-activation. `Identity` turns the
/// cell into an exactly linear map, which is how derivative code is checked
/// at rounding precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateActivation {
    #[default]
    Tanh,
    Identity,
}

impl StateActivation {
    pub fn name(self) -> &'static str {
        match self {
            StateActivation::Tanh => "tanh",
            StateActivation::Identity => "identity",
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            StateActivation::Tanh => crate::linalg::tanh(x),
            StateActivation::Identity => x,
        }
    }

    /// Derivative expressed through the activation value `a = φ(x)`.
    #[inline]
    fn derivative_from_value(self, a: f64) -> f64 {
        match self {
            StateActivation::Tanh => 1.0 - a * a,
            StateActivation::Identity => 1.0,
        }
    }
}

/// The recurrent part of the network: everything except the readout.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    variant: RnnVariant,
    activation: StateActivation,
    /// Delay `k` → `W_k` (p × p). Never empty; keys are ≥ 1.
    recurrent: BTreeMap<usize, Matrix>,
    u: Matrix,
    b_i: Vector,
}

/// One forward step, cached for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnStep {
    pub x: Vector,
    /// Pre-activation `i_t`.
    pub pre: Vector,
    /// `φ(i_t)`; equal to `h_t` except for leaky cells.
    pub act: Vector,
    pub h: Vector,
}

/// Forward activations of a cell over one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub variant: RnnVariant,
    pub steps: Vec<RnnStep>,
}

impl CellTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> Vec<Vector> {
        self.steps.iter().map(|s| s.h.clone()).collect()
    }

    /// `h_{t−k}` for 1-based step `t`, `None` before the sequence start.
    pub(crate) fn state_before(&self, t: usize, k: usize) -> Option<&Vector> {
        (t > k).then(|| &self.steps[t - k - 1].h)
    }
}

/// Full forward trace: cell activations plus outputs `y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnTrace {
    pub cell: CellTrace,
    pub outputs: Vec<Vector>,
}

impl RnnCell {
    pub fn new(variant: RnnVariant, recurrent: BTreeMap<usize, Matrix>, u: Matrix, b_i: Vector) -> Result<Self> {
        let p = b_i.len();
        if recurrent.is_empty() {
            return Err(Error::invalid("delay set must be nonempty"));
        }
        if recurrent.contains_key(&0) {
            return Err(Error::invalid("delays must be >= 1"));
        }
        for w in recurrent.values() {
            if w.shape() != (p, p) {
                return Err(Error::Dimension {
                    op: "recurrent weight",
                    left: (p, p),
                    right: w.shape(),
                });
            }
        }
        if u.rows() != p {
            return Err(Error::Dimension {
                op: "input weight",
                left: (p, u.cols()),
                right: u.shape(),
            });
        }
        if let RnnVariant::Leaky(cfg) = &variant {
            if cfg.tau.len() != p {
                return Err(Error::Length {
                    what: "tau",
                    got: cfg.tau.len(),
                    expected: p,
                });
            }
        }
        Ok(Self {
            variant,
            activation: StateActivation::Tanh,
            recurrent,
            u,
            b_i,
        })
    }

    /// Single-delay cell with recurrent weight `w`.
    pub fn single(variant: RnnVariant, w: Matrix, u: Matrix, b_i: Vector) -> Result<Self> {
        Self::new(variant, BTreeMap::from([(1, w)]), u, b_i)
    }

    pub fn zeros(variant: RnnVariant, delays: &[usize], p: usize, d: usize) -> Result<Self> {
        let recurrent = delays.iter().map(|&k| (k, Matrix::zeros(p, p))).collect();
        Self::new(variant, recurrent, Matrix::zeros(p, d), Vector::zeros(p))
    }

    /// Recurrent weights drawn from `scheme`; `U` uniform in `±1/√d`; zero bias.
    pub fn init(
        variant: RnnVariant,
        delays: &[usize],
        p: usize,
        d: usize,
        scheme: &InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut recurrent = BTreeMap::new();
        for &k in delays {
            recurrent.insert(k, init_weights((p, p), scheme, rng)?);
        }
        let u = uniform_matrix(p, d, 1.0 / (d.max(1) as f64).sqrt(), rng);
        Self::new(variant, recurrent, u, Vector::zeros(p))
    }

    pub fn with_activation(mut self, activation: StateActivation) -> Self {
        self.activation = activation;
        self
    }

    pub fn variant(&self) -> &RnnVariant {
        &self.variant
    }

    pub fn activation(&self) -> StateActivation {
        self.activation
    }

    pub fn hidden_width(&self) -> usize {
        self.b_i.len()
    }

    pub fn input_width(&self) -> usize {
        self.u.cols()
    }

    pub fn delays(&self) -> Vec<usize> {
        self.recurrent.keys().copied().collect()
    }

    /// `W_k`, if `k` is in the delay set.
    pub fn w(&self, k: usize) -> Option<&Matrix> {
        self.recurrent.get(&k)
    }

    pub fn w_mut(&mut self, k: usize) -> Option<&mut Matrix> {
        self.recurrent.get_mut(&k)
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn u_mut(&mut self) -> &mut Matrix {
        &mut self.u
    }

    pub fn b_i(&self) -> &Vector {
        &self.b_i
    }

    pub fn b_i_mut(&mut self) -> &mut Vector {
        &mut self.b_i
    }

    /// One-step recurrence matrix `W_1` (plus `I` for the identity-plus
    /// variant); zero when the delay set lacks 1.
    pub fn effective_one_step(&self) -> Matrix {
        let p = self.hidden_width();
        let mut w = self.recurrent.get(&1).cloned().unwrap_or_else(|| Matrix::zeros(p, p));
        if self.variant == RnnVariant::IdentityPlus {
            w = w.add(&Matrix::identity(p)).expect("square");
        }
        w
    }

    /// Computes step `t` from the previous states `history` (oldest first, so
    /// `history[len − k]` is `h_{t−k}`; missing entries are zero).
    pub fn forward_step(&self, history: &[Vector], x: &Vector) -> Result<RnnStep> {
        let p = self.hidden_width();
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                op: "forward_step input",
                left: self.u.shape(),
                right: (x.len(), 1),
            });
        }
        if let Some(h) = history.iter().find(|h| h.len() != p) {
            return Err(Error::Dimension {
                op: "forward_step state",
                left: (p, 1),
                right: (h.len(), 1),
            });
        }
        let back = |k: usize| (k <= history.len()).then(|| &history[history.len() - k]);
        Ok(self.step_with(back, x))
    }

    fn step_with<'a>(&self, back: impl Fn(usize) -> Option<&'a Vector>, x: &Vector) -> RnnStep {
        let mut pre = self.b_i.clone();
        self.u.mul_vec_acc(x, &mut pre);
        for (&k, w) in &self.recurrent {
            if let Some(h) = back(k) {
                w.mul_vec_acc(h, &mut pre);
            }
        }
        let prev = back(1);
        if self.variant == RnnVariant::IdentityPlus {
            if let Some(h) = prev {
                pre.add_assign(h);
            }
        }
        let act = pre.map(|v| self.activation.apply(v));
        let h = match &self.variant {
            RnnVariant::Leaky(cfg) => Vector::from_fn(act.len(), |j| {
                let inv = 1.0 / cfg.tau[j];
                let carried = prev.map_or(0.0, |h| h[j]);
                (1.0 - inv) * carried + inv * act[j]
            }),
            _ => act.clone(),
        };
        RnnStep {
            x: x.clone(),
            pre,
            act,
            h,
        }
    }

    /// Runs the cell over a sequence from zero initial states.
    pub fn run(&self, inputs: &[Vector]) -> Result<CellTrace> {
        check_inputs(inputs, self.input_width())?;
        let mut trace = CellTrace {
            variant: self.variant.clone(),
            steps: Vec::with_capacity(inputs.len()),
        };
        for x in inputs {
            let t = trace.steps.len() + 1;
            let step = {
                let tr = &trace;
                self.step_with(|k| tr.state_before(t, k), x)
            };
            trace.steps.push(step);
        }
        Ok(trace)
    }

    pub(crate) fn check_trace(&self, trace: &CellTrace) -> Result<()> {
        if trace.variant != self.variant {
            return Err(Error::Mismatch(format!(
                "trace variant {} vs cell variant {}",
                trace.variant.name(),
                self.variant.name()
            )));
        }
        let p = self.hidden_width();
        for s in &trace.steps {
            if s.h.len() != p || s.x.len() != self.input_width() || s.pre.len() != p {
                return Err(Error::Mismatch("trace widths differ from cell widths".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn reference_shape(&self) -> reference::RnnShape<'_> {
        reference::RnnShape {
            variant: &self.variant,
            activation: self.activation,
            delays: self.delays(),
            single_name: self.recurrent.len() == 1 && self.recurrent.contains_key(&1),
            p: self.hidden_width(),
        }
    }

    pub(crate) fn w_name(&self, k: usize) -> String {
        if self.recurrent.len() == 1 && k == 1 {
            "W".to_string()
        } else {
            format!("W_k:{k}")
        }
    }

    pub(crate) fn write_sections(&self, mut bundle: Bundle, prefix: &str) -> Bundle {
        for (&k, w) in &self.recurrent {
            bundle = bundle.matrix(format!("{prefix}{}", self.w_name(k)), w);
        }
        bundle = bundle.matrix(format!("{prefix}U"), &self.u).vector(format!("{prefix}b_i"), &self.b_i);
        if let RnnVariant::Leaky(cfg) = &self.variant {
            bundle = bundle.vector(format!("{prefix}tau"), &cfg.tau);
        }
        bundle
    }

    pub(crate) fn read_sections(bundle: &Bundle, variant: &str, activation: &str, prefix: &str) -> Result<Self> {
        let mut recurrent = BTreeMap::new();
        for (name, m) in &bundle.sections {
            let Some(rest) = name.strip_prefix(prefix) else { continue };
            if rest == "W" {
                recurrent.insert(1, m.clone());
            } else if let Some(k) = rest.strip_prefix("W_k:") {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::parse(0, format!("bad delay in section '{name}'")))?;
                recurrent.insert(k, m.clone());
            }
        }
        let u = bundle.get_matrix(&format!("{prefix}U"))?;
        let b_i = bundle.get_vector(&format!("{prefix}b_i"))?;
        let variant = match variant {
            "vanilla" => RnnVariant::Vanilla,
            "identity_plus" => RnnVariant::IdentityPlus,
            "leaky" => RnnVariant::Leaky(LeakyConfig::new(bundle.get_vector(&format!("{prefix}tau"))?)?),
            other => return Err(Error::parse(0, format!("unknown rnn variant '{other}'"))),
        };
        let activation = match activation {
            "tanh" => StateActivation::Tanh,
            "identity" => StateActivation::Identity,
            other => return Err(Error::parse(0, format!("unknown activation '{other}'"))),
        };
        Ok(Self::new(variant, recurrent, u, b_i)?.with_activation(activation))
    }

    pub(crate) fn prefixed_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        let mut out: Vec<Block<'a>> = self
            .recurrent
            .iter()
            .map(|(&k, w)| Block::new(format!("{prefix}{}", self.w_name(k)), w.as_slice()))
            .collect();
        out.push(Block::new(format!("{prefix}U"), self.u.as_slice()));
        out.push(Block::new(format!("{prefix}b_i"), self.b_i.as_slice()));
        out
    }

    pub(crate) fn prefixed_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        let names: Vec<String> = self.recurrent.keys().map(|&k| format!("{prefix}{}", self.w_name(k))).collect();
        let mut out: Vec<BlockMut<'a>> = self
            .recurrent
            .values_mut()
            .zip(names)
            .map(|(w, name)| BlockMut::new(name, w.as_mut_slice()))
            .collect();
        out.push(BlockMut::new(format!("{prefix}U"), self.u.as_mut_slice()));
        out.push(BlockMut::new(format!("{prefix}b_i"), self.b_i.as_mut_slice()));
        out
    }
}

impl Parameters for RnnCell {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.prefixed_blocks("")
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.prefixed_blocks_mut("")
    }
}

/// Cell plus readout: the complete network.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub cell: RnnCell,
    pub readout: Readout,
}

/// Gradients mirror the parameter layout.
pub type RnnGradients = RnnParams;

impl RnnParams {
    pub fn new(cell: RnnCell, readout: Readout) -> Result<Self> {
        if readout.hidden_width() != cell.hidden_width() {
            return Err(Error::Dimension {
                op: "readout",
                left: readout.v.shape(),
                right: (cell.hidden_width(), 1),
            });
        }
        Ok(Self { cell, readout })
    }

    pub fn init(
        variant: RnnVariant,
        delays: &[usize],
        (p, d, q): (usize, usize, usize),
        scheme: &InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let cell = RnnCell::init(variant, delays, p, d, scheme, rng)?;
        Self::new(cell, Readout::init(q, p, rng))
    }

    pub fn zeros(variant: RnnVariant, delays: &[usize], (p, d, q): (usize, usize, usize)) -> Result<Self> {
        Self::new(RnnCell::zeros(variant, delays, p, d)?, Readout::zeros(q, p))
    }

    pub fn forward(&self, inputs: &[Vector]) -> Result<RnnTrace> {
        let cell = self.cell.run(inputs)?;
        let outputs = cell.steps.iter().map(|s| self.readout.apply(&s.h)).collect();
        Ok(RnnTrace { cell, outputs })
    }

    pub fn to_bundle(&self) -> Bundle {
        let b = Bundle::new()
            .header("variant", self.cell.variant.name())
            .header("activation", self.cell.activation.name());
        self.cell
            .write_sections(b, "")
            .matrix("V", &self.readout.v)
            .vector("b_y", &self.readout.b_y)
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let cell = RnnCell::read_sections(bundle, bundle.get_header("variant")?, bundle.get_header("activation")?, "")?;
        let readout = Readout::new(bundle.get_matrix("V")?, bundle.get_vector("b_y")?)?;
        Self::new(cell, readout)
    }
}

impl Parameters for RnnParams {
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

impl Model for RnnParams {
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
        let (loss, grads) = bptt(self, &trace, targets, kind)?;
        Ok(Evaluation {
            loss,
            outputs: trace.outputs,
            grads,
        })
    }

    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R> {
        check_inputs(inputs, self.input_width())?;
        let n = reference::Named::new(self, flat)?;
        let hs = reference::rnn_states(&self.cell.reference_shape(), &n, "", &reference::lift(inputs))?;
        let ys = hs
            .iter()
            .map(|h| reference::readout(&n, "V", "b_y", h))
            .collect::<Result<Vec<_>>>()?;
        reference::sequence_loss(&ys, targets, kind)
    }
}

#[cfg(test)]
mod tests;
