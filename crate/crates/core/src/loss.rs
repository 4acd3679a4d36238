//! Output activations and per-step losses summed over the truncation window.
//!
//! Steps are indexed forward, `t = 1..=T`, with `t = T` the most recent.

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `L_t = ½ ‖y_t − y*_t‖²` on the raw output.
    SquaredError,
    /// `L_t = −ln softmax(y_t)[k]` for target class `k`.
    CrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }
}

/// Target for one time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Value(Vector),
    Class(usize),
    /// The step is not scored.
    Skip,
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(y: &Vector) -> Vector {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = y.map(|v| (v - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.scale(1.0 / sum)
}

fn check_step(y: &Vector, target: &Target, kind: LossKind, step: usize) -> Result<()> {
    match (kind, target) {
        (_, Target::Skip) => Ok(()),
        (LossKind::SquaredError, Target::Value(v)) if v.len() == y.len() => Ok(()),
        (LossKind::SquaredError, Target::Value(v)) => Err(Error::Target {
            step,
            reason: format!("target width {} does not match output width {}", v.len(), y.len()),
        }),
        (LossKind::CrossEntropy, Target::Class(k)) if *k < y.len() => Ok(()),
        (LossKind::CrossEntropy, Target::Class(k)) => Err(Error::Target {
            step,
            reason: format!("class index {k} out of range for {} classes", y.len()),
        }),
        (LossKind::SquaredError, Target::Class(_)) => Err(Error::Target {
            step,
            reason: "squared error needs a value target".into(),
        }),
        (LossKind::CrossEntropy, Target::Value(_)) => Err(Error::Target {
            step,
            reason: "cross-entropy needs a class index".into(),
        }),
    }
}

fn step_loss(y: &Vector, target: &Target, kind: LossKind) -> f64 {
    match (kind, target) {
        (_, Target::Skip) => 0.0,
        (LossKind::SquaredError, Target::Value(v)) => 0.5 * y.sub(v).iter().map(|d| d * d).sum::<f64>(),
        (LossKind::CrossEntropy, Target::Class(k)) => {
            let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - y[*k]
        }
        _ => unreachable!("validated by check_step"),
    }
}

/// `g_t = ∂L_t/∂y_t`.
fn step_grad(y: &Vector, target: &Target, kind: LossKind) -> Vector {
    match (kind, target) {
        (_, Target::Skip) => Vector::zeros(y.len()),
        (LossKind::SquaredError, Target::Value(v)) => y.sub(v),
        (LossKind::CrossEntropy, Target::Class(k)) => {
            let mut g = softmax(y);
            g[*k] -= 1.0;
            g
        }
        _ => unreachable!("validated by check_step"),
    }
}

fn check_lengths(outputs: &[Vector], targets: &[Target]) -> Result<()> {
    if outputs.len() != targets.len() {
        return Err(Error::Length {
            what: "targets",
            got: targets.len(),
            expected: outputs.len(),
        });
    }
    Ok(())
}

/// `L = Σ_t L_t`.
pub fn sequence_loss(outputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<f64> {
    check_lengths(outputs, targets)?;
    let mut total = 0.0;
    for (step, (y, target)) in outputs.iter().zip(targets).enumerate() {
        check_step(y, target, kind, step + 1)?;
        total += step_loss(y, target, kind);
    }
    Ok(total)
}

/// Total loss together with every `∂L_t/∂y_t`.
pub fn loss_and_output_grads(
    outputs: &[Vector],
    targets: &[Target],
    kind: LossKind,
) -> Result<(f64, Vec<Vector>)> {
    check_lengths(outputs, targets)?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (step, (y, target)) in outputs.iter().zip(targets).enumerate() {
        check_step(y, target, kind, step + 1)?;
        total += step_loss(y, target, kind);
        grads.push(step_grad(y, target, kind));
    }
    Ok((total, grads))
}

/// Task metric accumulated over scored steps: mean squared error per output
/// component for value targets, accuracy for class targets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metric {
    pub sum: f64,
    pub count: usize,
}

impl Metric {
    pub fn observe(&mut self, outputs: &[Vector], targets: &[Target]) {
        for (y, target) in outputs.iter().zip(targets) {
            match target {
                Target::Skip => {}
                Target::Value(v) => {
                    for (a, b) in y.iter().zip(v.iter()) {
                        self.sum += (a - b) * (a - b);
                        self.count += 1;
                    }
                }
                Target::Class(k) => {
                    let argmax = y
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                        .0;
                    self.sum += f64::from(u8::from(argmax == *k));
                    self.count += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Metric) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}
