//! Central-difference gradient oracle.
//!
//! For every scalar parameter θ the analytic derivative `a` is compared with
//! `n = (L(θ + ε) − L(θ − ε)) / 2ε`, scored as
//! `|a − n| / max(|a|, |n|, 1e−8)`.
//!
//! The report also carries the gap between the production forward pass and
//! the independent reference pass the differences are taken on, so a
//! disagreement in the forward equations cannot hide behind matching
//! derivatives.

use crate::error::{Error, Result};
use crate::linalg::{Dd, Real, Vector};
use crate::loss::{LossKind, Target};
use crate::model::Model;

pub const EPS_RANGE: (f64, f64) = (1e-7, 1e-3);
pub const REL_FLOOR: f64 = 1e-8;

/// Comparison for one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

impl GradCheckEntry {
    /// `block[index]`
    pub fn name(&self) -> String {
        format!("{}[{}]", self.block, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    /// See [`reference_gap`].
    pub reference_gap: f64,
    /// Index into `entries` of the largest error.
    pub worst: Option<usize>,
}

impl GradCheckReport {
    pub fn worst_entry(&self) -> Option<&GradCheckEntry> {
        self.worst.map(|i| &self.entries[i])
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Checks the model's own analytic gradient.
pub fn gradcheck<M: Model>(
    model: &M,
    inputs: &[Vector],
    targets: &[Target],
    kind: LossKind,
    eps: f64,
) -> Result<GradCheckReport> {
    let eval = model.evaluate(inputs, targets, kind)?;
    gradcheck_against(model, &eval.grads, inputs, targets, kind, eps)
}

/// Checks an externally supplied gradient (e.g. a deliberately corrupted one)
/// against finite differences of `model`'s loss.
pub fn gradcheck_against<M: Model>(
    model: &M,
    analytic: &M,
    inputs: &[Vector],
    targets: &[Target],
    kind: LossKind,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [{:e}, {:e}], got {eps:e}",
            EPS_RANGE.0, EPS_RANGE.1
        )));
    }
    let numeric = numeric_gradient(model, inputs, targets, kind, eps)?;
    let gap = reference_gap(model, inputs, targets, kind)?;
    let analytic_blocks = analytic.blocks();
    if analytic_blocks.len() != numeric.len() {
        return Err(Error::Mismatch("analytic gradient layout differs from model".into()));
    }

    let mut entries = Vec::new();
    for (block, (name, values)) in analytic_blocks.iter().zip(&numeric) {
        if block.name != *name || block.values.len() != values.len() {
            return Err(Error::Mismatch(format!("gradient block '{}' vs '{name}'", block.name)));
        }
        for (index, (&a, &n)) in block.values.iter().zip(values).enumerate() {
            entries.push(GradCheckEntry {
                block: name.clone(),
                index,
                analytic: a,
                numeric: n,
                rel_error: relative_error(a, n),
            });
        }
    }
    let worst = entries
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.rel_error.total_cmp(&b.1.rel_error))
        .map(|(i, _)| i);
    let max_rel_error = worst.map_or(0.0, |i| entries[i].rel_error);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        reference_gap: gap,
        worst,
    })
}

/// Central differences for every scalar, grouped by block.
///
/// The loss is evaluated by the model's reference forward pass in
/// double-double arithmetic, where `θ ± ε` is exact and the difference of the
/// two losses loses nothing to cancellation; what remains is the `O(ε²)`
/// truncation error of the central formula.
pub fn numeric_gradient<M: Model>(
    model: &M,
    inputs: &[Vector],
    targets: &[Target],
    kind: LossKind,
    eps: f64,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut flat: Vec<Dd> = model.flatten().into_iter().map(Dd::from).collect();
    let step = Dd::from(eps);
    let two_eps = step + step;
    let mut out = Vec::new();
    let mut at = 0;
    for block in model.blocks() {
        let mut grads = Vec::with_capacity(block.values.len());
        for i in 0..block.values.len() {
            let original = flat[at];
            let mut loss = |v: Dd| -> Result<Dd> {
                flat[at] = v;
                let l = model.reference_loss(&flat, inputs, targets, kind)?;
                if !l.to_f64().is_finite() {
                    return Err(Error::NonFinite(format!("loss while perturbing {}[{i}]", block.name)));
                }
                Ok(l)
            };
            let plus = loss(original + step)?;
            let minus = loss(original - step)?;
            flat[at] = original;
            grads.push(((plus - minus) / two_eps).to_f64());
            at += 1;
        }
        out.push((block.name, grads));
    }
    Ok(out)
}

/// `|L_ref − L| / max(|L|, 1)` between the production loss and the reference
/// pass evaluated at the same parameters in double-double.
pub fn reference_gap<M: Model>(model: &M, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<f64> {
    let flat: Vec<Dd> = model.flatten().into_iter().map(Dd::from).collect();
    let reference = model.reference_loss(&flat, inputs, targets, kind)?.to_f64();
    let production = model.loss(inputs, targets, kind)?;
    Ok((reference - production).abs() / production.abs().max(1.0))
}
