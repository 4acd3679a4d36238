//! The interface shared by every trainable sequence model, and the linear
//! readout `y_t = V h_t + b_y` most of them end with.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng, Vector};
use crate::loss::{sequence_loss, LossKind, Target};
use crate::params::{Block, BlockMut, Parameters};

/// Loss, outputs, and gradient of one sequence.
#[derive(Debug, Clone)]
pub struct Evaluation<P> {
    pub loss: f64,
    pub outputs: Vec<Vector>,
    pub grads: P,
}

/// A differentiable sequence-to-sequence model whose gradient has the same
/// layout as the model's own parameters.
pub trait Model: Parameters + Clone + Send + Sync {
    fn input_width(&self) -> usize;
    fn output_width(&self) -> usize;

    /// Outputs `y_1 … y_T`.
    fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>>;

    fn evaluate(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<Evaluation<Self>>;

    fn loss(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<f64> {
        sequence_loss(&self.predict(inputs)?, targets, kind)
    }

    /// Loss recomputed by an independent forward pass with parameters taken
    /// from `flat` (block order of [`Parameters::flatten`]), in any scalar type.
    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R>;
}

/// Checks a whole input sequence against the expected width.
pub(crate) fn check_inputs(inputs: &[Vector], width: usize) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("input sequence is empty"));
    }
    for x in inputs {
        if x.len() != width {
            return Err(Error::Dimension {
                op: "input",
                left: (width, 1),
                right: (x.len(), 1),
            });
        }
    }
    Ok(())
}

pub(crate) fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-scale, scale))
}

/// Linear output layer `y = V h + b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub v: Matrix,
    pub b_y: Vector,
}

impl Readout {
    pub fn new(v: Matrix, b_y: Vector) -> Result<Self> {
        if v.rows() != b_y.len() {
            return Err(Error::Dimension {
                op: "readout",
                left: v.shape(),
                right: (b_y.len(), 1),
            });
        }
        Ok(Self { v, b_y })
    }

    /// `V` uniform in `±1/√p`, `b_y = 0`.
    pub fn init(q: usize, p: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (p.max(1) as f64).sqrt();
        Self {
            v: uniform_matrix(q, p, s, rng),
            b_y: Vector::zeros(q),
        }
    }

    pub fn zeros(q: usize, p: usize) -> Self {
        Self {
            v: Matrix::zeros(q, p),
            b_y: Vector::zeros(q),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.v.cols()
    }

    pub fn output_width(&self) -> usize {
        self.v.rows()
    }

    pub fn apply(&self, h: &Vector) -> Vector {
        let mut y = self.b_y.clone();
        self.v.mul_vec_acc(h, &mut y);
        y
    }

    /// Accumulates `dV += g hᵀ`, `db_y += g` and returns `Vᵀ g`.
    pub(crate) fn backward(&self, g: &Vector, h: &Vector, grads: &mut Readout) -> Vector {
        grads.v.add_outer(g, h);
        grads.b_y.add_assign(g);
        self.v.tr_mul_vec(g)
    }

    pub(crate) fn blocks_named<'a>(&'a self, v: &str, b: &str) -> [Block<'a>; 2] {
        [Block::new(v, self.v.as_slice()), Block::new(b, self.b_y.as_slice())]
    }

    pub(crate) fn blocks_named_mut<'a>(&'a mut self, v: &str, b: &str) -> [BlockMut<'a>; 2] {
        [
            BlockMut::new(v, self.v.as_mut_slice()),
            BlockMut::new(b, self.b_y.as_mut_slice()),
        ]
    }
}

/// Affine map `W h + U x + b` feeding one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vector,
}

impl Affine {
    pub(crate) fn zeros(p: usize, d: usize) -> Self {
        Self {
            w: Matrix::zeros(p, p),
            u: Matrix::zeros(p, d),
            b: Vector::zeros(p),
        }
    }

    pub(crate) fn init(p: usize, d: usize, bias: f64, rng: &mut Rng) -> Self {
        Self {
            w: uniform_matrix(p, p, 1.0 / (p.max(1) as f64).sqrt(), rng),
            u: uniform_matrix(p, d, 1.0 / (d.max(1) as f64).sqrt(), rng),
            b: Vector::filled(p, bias),
        }
    }

    pub(crate) fn apply(&self, h: &Vector, x: &Vector) -> Vector {
        let mut a = self.b.clone();
        self.w.mul_vec_acc(h, &mut a);
        self.u.mul_vec_acc(x, &mut a);
        a
    }

    pub(crate) fn check(&self, op: &'static str, p: usize, d: usize) -> Result<()> {
        for (m, shape) in [(&self.w, (p, p)), (&self.u, (p, d))] {
            if m.shape() != shape {
                return Err(Error::Dimension {
                    op,
                    left: shape,
                    right: m.shape(),
                });
            }
        }
        if self.b.len() != p {
            return Err(Error::Length {
                what: "bias",
                got: self.b.len(),
                expected: p,
            });
        }
        Ok(())
    }

    /// Accumulates the parameter gradient for pre-activation adjoint `da`.
    pub(crate) fn accumulate(&mut self, da: &Vector, h: &Vector, x: &Vector) {
        self.w.add_outer(da, h);
        self.u.add_outer(da, x);
        self.b.add_assign(da);
    }

    pub(crate) fn blocks<'a>(&'a self, prefix: &str, sym: char) -> [Block<'a>; 3] {
        [
            Block::new(format!("{prefix}W_{sym}"), self.w.as_slice()),
            Block::new(format!("{prefix}U_{sym}"), self.u.as_slice()),
            Block::new(format!("{prefix}b_{sym}"), self.b.as_slice()),
        ]
    }

    pub(crate) fn blocks_mut<'a>(&'a mut self, prefix: &str, sym: char) -> [BlockMut<'a>; 3] {
        [
            BlockMut::new(format!("{prefix}W_{sym}"), self.w.as_mut_slice()),
            BlockMut::new(format!("{prefix}U_{sym}"), self.u.as_mut_slice()),
            BlockMut::new(format!("{prefix}b_{sym}"), self.b.as_mut_slice()),
        ]
    }
}
