//! Independent forward passes, generic in the scalar type, that evaluate a
//! model's loss from a flat parameter vector laid out like
//! [`Parameters::flatten`]. They share no code with the production cells and
//! exist to serve as the finite-difference oracle, usually in double-double
//! precision.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{Real, Vector};
use crate::loss::{LossKind, Target};
use crate::gru::GruVariant;
use crate::lstm::{Gate, LstmVariant};
use crate::params::Parameters;
use crate::rnn::{RnnVariant, StateActivation};

/// Flat parameters addressed by block name.
pub(crate) struct Named<'a, R> {
    flat: &'a [R],
    offsets: HashMap<String, (usize, usize)>,
}

impl<'a, R: Real> Named<'a, R> {
    pub(crate) fn new<P: Parameters + ?Sized>(model: &P, flat: &'a [R]) -> Result<Self> {
        let mut offsets = HashMap::new();
        let mut at = 0;
        for b in model.blocks() {
            offsets.insert(b.name, (at, b.values.len()));
            at += b.values.len();
        }
        if at != flat.len() {
            return Err(Error::Length {
                what: "flat parameters",
                got: flat.len(),
                expected: at,
            });
        }
        Ok(Self { flat, offsets })
    }

    pub(crate) fn get(&self, name: &str) -> Result<&'a [R]> {
        let &(start, len) = self
            .offsets
            .get(name)
            .ok_or_else(|| Error::Mismatch(format!("no parameter block '{name}'")))?;
        Ok(&self.flat[start..start + len])
    }

    pub(crate) fn has(&self, name: &str) -> bool {
        self.offsets.contains_key(name)
    }
}

/// Row-major `W x` for a `rows × x.len()` matrix.
pub(crate) fn mv<R: Real>(w: &[R], x: &[R]) -> Vec<R> {
    let cols = x.len();
    w.chunks(cols.max(1))
        .map(|row| row.iter().zip(x).fold(R::zero(), |acc, (&a, &b)| acc + a * b))
        .collect()
}

pub(crate) fn add<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

fn mul<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

pub(crate) fn lift<R: Real>(inputs: &[Vector]) -> Vec<Vec<R>> {
    inputs.iter().map(|x| x.iter().map(|&v| R::from_f64(v)).collect()).collect()
}

/// `W h + U x + b` with blocks `{prefix}W_{s}`, `{prefix}U_{s}`, `{prefix}b_{s}`.
fn affine<R: Real>(n: &Named<'_, R>, prefix: &str, s: char, h: &[R], x: &[R]) -> Result<Vec<R>> {
    let wh = mv(n.get(&format!("{prefix}W_{s}"))?, h);
    let ux = mv(n.get(&format!("{prefix}U_{s}"))?, x);
    Ok(add(&add(&wh, &ux), n.get(&format!("{prefix}b_{s}"))?))
}

pub(crate) fn readout<R: Real>(n: &Named<'_, R>, v: &str, b: &str, h: &[R]) -> Result<Vec<R>> {
    Ok(add(&mv(n.get(v)?, h), n.get(b)?))
}

/// Structure of a simple recurrent cell (everything except trainable values).
pub(crate) struct RnnShape<'a> {
    pub variant: &'a RnnVariant,
    pub activation: StateActivation,
    pub delays: Vec<usize>,
    pub single_name: bool,
    pub p: usize,
}

pub(crate) fn rnn_states<R: Real>(
    shape: &RnnShape<'_>,
    n: &Named<'_, R>,
    prefix: &str,
    xs: &[Vec<R>],
) -> Result<Vec<Vec<R>>> {
    let p = shape.p;
    let u = n.get(&format!("{prefix}U"))?;
    let b = n.get(&format!("{prefix}b_i"))?;
    let ws: Vec<(usize, &[R])> = shape
        .delays
        .iter()
        .map(|&k| {
            let name = if shape.single_name {
                format!("{prefix}W")
            } else {
                format!("{prefix}W_k:{k}")
            };
            n.get(&name).map(|w| (k, w))
        })
        .collect::<Result<_>>()?;
    let mut hs: Vec<Vec<R>> = Vec::with_capacity(xs.len());
    let zero = vec![R::zero(); p];
    for x in xs {
        let t = hs.len();
        let back = |k: usize| if k <= t { &hs[t - k] } else { &zero };
        let mut pre = add(&mv(u, x), b);
        for &(k, w) in &ws {
            pre = add(&pre, &mv(w, back(k)));
        }
        if matches!(shape.variant, RnnVariant::IdentityPlus) {
            pre = add(&pre, back(1));
        }
        let act: Vec<R> = match shape.activation {
            StateActivation::Tanh => pre.iter().map(|&v| v.tanh()).collect(),
            StateActivation::Identity => pre,
        };
        let h = match shape.variant {
            RnnVariant::Leaky(cfg) => {
                let prev = back(1);
                (0..p)
                    .map(|j| {
                        let inv = R::one() / R::from_f64(cfg.tau()[j]);
                        (R::one() - inv) * prev[j] + inv * act[j]
                    })
                    .collect()
            }
            _ => act,
        };
        hs.push(h);
    }
    Ok(hs)
}

pub(crate) fn lstm_states<R: Real>(
    variant: LstmVariant,
    p: usize,
    n: &Named<'_, R>,
    prefix: &str,
    xs: &[Vec<R>],
) -> Result<Vec<Vec<R>>> {
    let zero = vec![R::zero(); p];
    let ones = vec![R::one(); p];
    let (mut h, mut c) = (zero.clone(), zero.clone());
    let mut gates_prev = [zero.clone(), zero.clone(), zero.clone()];
    let pairs = variant.recurrence_pairs();
    let mut hs = Vec::with_capacity(xs.len());
    let gate_pre = |g: Gate, h: &[R], x: &[R], peek: &[R], prev: &[Vec<R>; 3]| -> Result<Vec<R>> {
        let mut a = affine(n, prefix, g.symbol(), h, x)?;
        let peep = format!("{prefix}p_{g}");
        if n.has(&peep) {
            a = add(&a, &mul(n.get(&peep)?, peek));
        }
        for &(to, from) in &pairs {
            if to == g {
                let r = n.get(&format!("{prefix}R_{to}{from}"))?;
                a = add(&a, &mv(r, &prev[from as usize]));
            }
        }
        Ok(a)
    };
    for x in xs {
        let i: Vec<R> = gate_pre(Gate::Input, &h, x, &c, &gates_prev)?.iter().map(|v| v.sigmoid()).collect();
        let f: Vec<R> = if variant.forget_gate {
            gate_pre(Gate::Forget, &h, x, &c, &gates_prev)?.iter().map(|v| v.sigmoid()).collect()
        } else {
            ones.clone()
        };
        let cand: Vec<R> = affine(n, prefix, 'c', &h, x)?.iter().map(|v| v.tanh()).collect();
        let c_new = add(&mul(&f, &c), &mul(&i, &cand));
        let o: Vec<R> = gate_pre(Gate::Output, &h, x, &c_new, &gates_prev)?.iter().map(|v| v.sigmoid()).collect();
        let h_new: Vec<R> = o.iter().zip(&c_new).map(|(&a, &b)| a * b.tanh()).collect();
        gates_prev = [i, f, o];
        c = c_new;
        h = h_new;
        hs.push(h.clone());
    }
    Ok(hs)
}

pub(crate) fn gru_states<R: Real>(
    variant: GruVariant,
    p: usize,
    n: &Named<'_, R>,
    prefix: &str,
    xs: &[Vec<R>],
) -> Result<Vec<Vec<R>>> {
    let mut h = vec![R::zero(); p];
    let mut hs = Vec::with_capacity(xs.len());
    let sig = |v: Vec<R>| v.into_iter().map(|a| a.sigmoid()).collect::<Vec<R>>();
    for x in xs {
        let (r, z) = match variant {
            GruVariant::FullyGated => (
                sig(affine(n, prefix, 'r', &h, x)?),
                sig(affine(n, prefix, 'z', &h, x)?),
            ),
            GruVariant::Minimal => {
                let f = sig(affine(n, prefix, 'f', &h, x)?);
                (f.clone(), f)
            }
        };
        let cand: Vec<R> = affine(n, prefix, 'c', &mul(&r, &h), x)?.into_iter().map(|v| v.tanh()).collect();
        h = (0..p).map(|j| (R::one() - z[j]) * h[j] + z[j] * cand[j]).collect();
        hs.push(h.clone());
    }
    Ok(hs)
}

/// Summed loss over steps, mirroring [`crate::loss::sequence_loss`].
pub(crate) fn sequence_loss<R: Real>(outputs: &[Vec<R>], targets: &[Target], kind: LossKind) -> Result<R> {
    if outputs.len() != targets.len() {
        return Err(Error::Length {
            what: "targets",
            got: targets.len(),
            expected: outputs.len(),
        });
    }
    let mut total = R::zero();
    for (t, (y, target)) in outputs.iter().zip(targets).enumerate() {
        let step = match (kind, target) {
            (_, Target::Skip) => R::zero(),
            (LossKind::SquaredError, Target::Value(v)) if v.len() == y.len() => {
                let s = y
                    .iter()
                    .zip(v.iter())
                    .fold(R::zero(), |acc, (&a, &b)| {
                        let d = a - R::from_f64(b);
                        acc + d * d
                    });
                R::from_f64(0.5) * s
            }
            (LossKind::CrossEntropy, Target::Class(k)) if *k < y.len() => {
                let max = y.iter().copied().fold(y[0], |m, v| if v > m { v } else { m });
                let sum = y.iter().fold(R::zero(), |acc, &v| acc + (v - max).exp());
                max + sum.ln() - y[*k]
            }
            _ => {
                return Err(Error::Target {
                    step: t + 1,
                    reason: "target does not fit the output or loss kind".into(),
                })
            }
        };
        total = total + step;
    }
    Ok(total)
}
