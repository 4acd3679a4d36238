use rayon::prelude::*;

use super::registry::{Family, ModelSpec};
use super::task::Task;
use super::train::{train, Optimizer, TrainConfig, TrainReport};
use crate::error::Result;
use crate::linalg::Rng;
use crate::params::Parameters;

/// One model of a comparison with its own training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Contender {
    pub spec: ModelSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub family: Family,
    pub hidden: usize,
    pub params: usize,
    pub report: TrainReport,
}

/// Trains every contender on `task` from a model drawn off
/// `child(train.seed, "model/<family>")`. Runs are independent and execute in
/// parallel; rows come back in input order.
pub fn compare(task: &Task, contenders: &[Contender]) -> Result<Vec<CompareRow>> {
    contenders
        .par_iter()
        .map(|c| {
            let mut rng = Rng::child(c.train.seed, &format!("model/{}", c.spec.family));
            let mut model = c.spec.build(&mut rng)?;
            let report = train(&mut model, task, &c.train)?;
            Ok(CompareRow {
                family: c.spec.family,
                hidden: c.spec.hidden,
                params: model.num_params(),
                report,
            })
        })
        .collect()
}

/// Settings of the long-gap echo comparison: vanilla RNN, leaky RNN and
/// vanilla LSTM, each as wide as a shared parameter budget allows.
pub mod echo {
    use super::*;

    pub const GAP: usize = 20;
    pub const LEN: usize = 60;
    pub const EPOCHS: usize = 2000;
    pub const BUDGET: usize = 1260;
    pub const FAMILIES: [Family; 3] = [Family::LstmVanilla, Family::RnnLeaky, Family::RnnVanilla];

    pub fn task() -> Task {
        Task::DelayedEcho { gap: GAP }
    }

    /// Adam over minibatches of 8 drawn fresh every epoch; learning rates
    /// tuned per family on a seed outside the evaluation range.
    pub fn config(family: Family, seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            eta: if family.group() == "lstm" { 0.03 } else { 0.01 },
            epochs,
            len: LEN,
            train_size: 32,
            test_size: 100,
            batch: 8,
            fresh: true,
            clip: Some(1.0),
            optimizer: Optimizer::ADAM,
            seed,
        }
    }

    pub fn contenders(seed: u64, epochs: usize) -> Result<Vec<Contender>> {
        let task = task();
        FAMILIES
            .into_iter()
            .map(|f| {
                Ok(Contender {
                    spec: ModelSpec::matched(f, BUDGET, task.input_width(), task.output_width())?,
                    train: config(f, seed, epochs),
                })
            })
            .collect()
    }
}
