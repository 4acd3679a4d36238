use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::task::{Sample, Task};
use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::loss::{LossKind, Metric};
use crate::model::Model;
use crate::params::{clip_norm, zeros_like};

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `θ := θ − η g`.
    Sgd,
    /// Bias-corrected first and second moment scaling of `g`.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Sgd => f.write_str("sgd"),
            Optimizer::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::ADAM),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Training hyperparameters. Data come from fixed training and test sets
/// drawn once from child streams of `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Learning rate η.
    pub eta: f64,
    pub epochs: usize,
    /// Sequence length T.
    pub len: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Sequences per update; `0` means the whole training set.
    pub batch: usize,
    /// Draw a new training set of `train_size` sequences every epoch
    /// instead of reusing one fixed set.
    pub fresh: bool,
    /// Rescale the averaged gradient to at most this norm.
    pub clip: Option<f64>,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            epochs: 100,
            len: 20,
            train_size: 32,
            test_size: 32,
            batch: 0,
            fresh: false,
            clip: Some(1.0),
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", self.eta)));
        }
        if self.train_size == 0 {
            return Err(Error::invalid("training set must not be empty"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("clip threshold must be positive, got {c}")));
            }
        }
        Ok(())
    }

    fn batch_size(&self) -> usize {
        if self.batch == 0 {
            self.train_size
        } else {
            self.batch.min(self.train_size)
        }
    }
}

/// One row of a learning curve: mean sequence loss and task metric over
/// the epoch's batches, measured before each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    pub train_loss: f64,
    pub train_metric: f64,
    pub test_loss: f64,
    pub test_metric: f64,
}

/// Mean sequence loss and metric over a dataset.
pub fn evaluate_dataset<M: Model>(model: &M, data: &[Sample], kind: LossKind) -> Result<(f64, f64)> {
    let results: Vec<Result<(f64, Metric)>> = data
        .par_iter()
        .map(|s| {
            let out = model.predict(&s.inputs)?;
            let loss = crate::loss::sequence_loss(&out, &s.targets, kind)?;
            let mut m = Metric::default();
            m.observe(&out, &s.targets);
            Ok((loss, m))
        })
        .collect();
    let mut total = 0.0;
    let mut metric = Metric::default();
    for r in results {
        let (l, m) = r?;
        total += l;
        metric.merge(&m);
    }
    Ok((total / data.len().max(1) as f64, metric.value()))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn apply_update<M: Model>(model: &mut M, grads: &M, cfg: &TrainConfig, adam: &mut Option<AdamState>) -> Result<()> {
    match (cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => model.sgd_step(grads, cfg.eta),
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.step += 1;
            let c1 = 1.0 - beta1.powi(state.step);
            let c2 = 1.0 - beta2.powi(state.step);
            let g = grads.flatten();
            let mut i = 0;
            for b in model.blocks_mut() {
                for w in b.values.iter_mut() {
                    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
                    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
                    *w -= cfg.eta * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
                    i += 1;
                }
            }
            Ok(())
        }
        (Optimizer::Adam { .. }, None) => unreachable!("adam state is created with the optimizer"),
    }
}

/// Gradient descent on a task. The model is updated in place; the run is a
/// pure function of `model`, `task` and `cfg`.
pub fn train<M: Model>(model: &mut M, task: &Task, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if model.input_width() != task.input_width() || model.output_width() != task.output_width() {
        return Err(Error::Dimension {
            op: "model vs task widths",
            left: (model.input_width(), model.output_width()),
            right: (task.input_width(), task.output_width()),
        });
    }
    let kind = task.loss_kind();
    let mut train_set = task.dataset(cfg.len, cfg.train_size, cfg.seed, "train")?;
    let test_set = task.dataset(cfg.len, cfg.test_size, cfg.seed, "test")?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle = Rng::child(cfg.seed, "shuffle");
    let batch = cfg.batch_size();
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => {
            let n = model.num_params();
            Some(AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            })
        }
        Optimizer::Sgd => None,
    };

    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.fresh && epoch > 1 {
            train_set = task.dataset(cfg.len, cfg.train_size, cfg.seed, &format!("train/{epoch}"))?;
        }
        if batch < train_set.len() {
            for i in (1..order.len()).rev() {
                order.swap(i, shuffle.below(i + 1));
            }
        }
        let mut epoch_loss = 0.0;
        let mut metric = Metric::default();
        for chunk in order.chunks(batch) {
            let evals: Vec<_> = chunk
                .par_iter()
                .map(|&i| model.evaluate(&train_set[i].inputs, &train_set[i].targets, kind))
                .collect();
            let mut grads = zeros_like(&*model);
            for (e, &i) in evals.into_iter().zip(chunk) {
                let e = e?;
                epoch_loss += e.loss;
                metric.observe(&e.outputs, &train_set[i].targets);
                grads.axpy(1.0 / chunk.len() as f64, &e.grads)?;
            }
            if !epoch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: epoch_loss,
                });
            }
            if let Some(c) = cfg.clip {
                clip_norm(&mut grads, c);
            }
            apply_update(model, &grads, cfg, &mut adam)?;
        }
        let loss = epoch_loss / train_set.len() as f64;
        curve.push(EpochStats {
            epoch,
            loss,
            metric: metric.value(),
        });
    }

    let (train_loss, train_metric) = evaluate_dataset(&*model, &train_set, kind)?;
    if !train_loss.is_finite() || model.flatten().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            loss: train_loss,
        });
    }
    let (test_loss, test_metric) = if test_set.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        evaluate_dataset(&*model, &test_set, kind)?
    };
    Ok(TrainReport {
        curve,
        train_loss,
        train_metric,
        test_loss,
        test_metric,
    })
}
