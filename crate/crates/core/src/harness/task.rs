use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};
use crate::loss::{LossKind, Target};

/// Synthetic sequence problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    /// `y*_t = x_{t−gap}` with `x_t` uniform in `[−1, 1]`, zero before the
    /// first echo.
    DelayedEcho { gap: usize },
    /// Two channels: values uniform in `[0, 1]` and a marker flag set at one
    /// step in each half. The only scored step is the last one, whose target
    /// is the sum of the two marked values.
    Adding,
    /// Bits in, running XOR out, scored as a two-class problem.
    Parity,
    /// `y*_t = x_{t+1}` for `x_t = sin(ω t + φ)`, ω uniform in `[0.1, 0.5]`.
    Sine,
}

/// Inputs and per-step targets of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vector>,
    pub targets: Vec<Target>,
}

impl Task {
    pub fn input_width(&self) -> usize {
        match self {
            Task::Adding => 2,
            _ => 1,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Task::Parity => 2,
            _ => 1,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            Task::Parity => LossKind::CrossEntropy,
            _ => LossKind::SquaredError,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        match *self {
            Task::DelayedEcho { gap } if gap >= len => Err(Error::invalid(format!(
                "echo gap {gap} must be smaller than the sequence length {len}"
            ))),
            Task::Adding if len < 2 => Err(Error::invalid("the adding problem needs at least two steps")),
            _ => Ok(()),
        }
    }

    pub fn generate(&self, len: usize, rng: &mut Rng) -> Result<Sample> {
        self.validate(len)?;
        Ok(match *self {
            Task::DelayedEcho { gap } => {
                let xs: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
                delayed_echo(&xs, gap)
            }
            Task::Adding => {
                let values: Vec<f64> = (0..len).map(|_| rng.unit()).collect();
                let half = len / 2;
                let first = rng.below(half);
                let second = half + rng.below(len - half);
                adding(&values, (first, second))?
            }
            Task::Parity => {
                let bits: Vec<bool> = (0..len).map(|_| rng.bernoulli(0.5)).collect();
                parity(&bits)
            }
            Task::Sine => {
                let omega = rng.uniform(0.1, 0.5);
                let phase = rng.uniform(0.0, TAU);
                sine(len, omega, phase)
            }
        })
    }

    /// `count` samples from independent child streams of `seed`.
    pub fn dataset(&self, len: usize, count: usize, seed: u64, tag: &str) -> Result<Vec<Sample>> {
        (0..count)
            .map(|i| self.generate(len, &mut Rng::child(seed, &format!("{tag}/{i}"))))
            .collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::DelayedEcho { gap } => write!(f, "delayed-echo:{gap}"),
            Task::Adding => f.write_str("adding"),
            Task::Parity => f.write_str("parity"),
            Task::Sine => f.write_str("sine"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    /// `delayed-echo:<gap>`, `adding`, `parity` or `sine`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adding" => Ok(Task::Adding),
            "parity" => Ok(Task::Parity),
            "sine" => Ok(Task::Sine),
            other => {
                let gap = other
                    .strip_prefix("delayed-echo:")
                    .and_then(|g| g.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown task '{other}'")))?;
                Ok(Task::DelayedEcho { gap })
            }
        }
    }
}

/// Echo of a given scalar sequence.
pub fn delayed_echo(xs: &[f64], gap: usize) -> Sample {
    let inputs = xs.iter().map(|&x| Vector::from([x])).collect();
    let targets = (0..xs.len())
        .map(|t| Target::Value(Vector::from([if t >= gap { xs[t - gap] } else { 0.0 }])))
        .collect();
    Sample { inputs, targets }
}

/// Adding-problem instance with markers at the given (0-based) steps.
pub fn adding(values: &[f64], marks: (usize, usize)) -> Result<Sample> {
    let len = values.len();
    if marks.0 >= len || marks.1 >= len || marks.0 == marks.1 {
        return Err(Error::invalid("adding-problem markers must be two distinct steps"));
    }
    let inputs = values
        .iter()
        .enumerate()
        .map(|(t, &v)| Vector::from([v, f64::from(u8::from(t == marks.0 || t == marks.1))]))
        .collect();
    let mut targets = vec![Target::Skip; len];
    targets[len - 1] = Target::Value(Vector::from([values[marks.0] + values[marks.1]]));
    Ok(Sample { inputs, targets })
}

pub fn parity(bits: &[bool]) -> Sample {
    let mut acc = false;
    let mut targets = Vec::with_capacity(bits.len());
    for &b in bits {
        acc ^= b;
        targets.push(Target::Class(usize::from(acc)));
    }
    let inputs = bits.iter().map(|&b| Vector::from([f64::from(u8::from(b))])).collect();
    Sample { inputs, targets }
}

pub fn sine(len: usize, omega: f64, phase: f64) -> Sample {
    let x = |t: usize| (omega * t as f64 + phase).sin();
    Sample {
        inputs: (0..len).map(|t| Vector::from([x(t)])).collect(),
        targets: (0..len).map(|t| Target::Value(Vector::from([x(t + 1)]))).collect(),
    }
}
