//! Experiment plumbing: synthetic tasks, a model registry, the training
//! loop, the gradient-flow probe and CSV reports.

mod compare;
mod gradflow;
mod registry;
pub mod report;
mod suite;
mod task;
mod train;

pub use compare::{compare, echo, CompareRow, Contender};
pub use crate::gradcheck::{gradcheck, GradCheckReport};
pub use gradflow::{gradient_flow_probe, scaled_cell, zero_state_jacobian, GradFlowReport, NORM_CAP};
pub use registry::{AnyModel, Family, ModelSpec, TauSpec, DELAYS};
pub use suite::{family_gradcheck, CheckInstance, SUITE_MAX_LEN, SUITE_MAX_WIDTH};
pub use task::{adding, delayed_echo, parity, sine, Sample, Task};
pub use train::{evaluate_dataset, train, EpochStats, Optimizer, TrainConfig, TrainReport};
