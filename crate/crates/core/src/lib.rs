//! Recurrent sequence models built on a small dense fp64 kernel layer.

pub mod bidir;
pub mod error;
pub mod esn;
pub mod gradcheck;
pub mod gru;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod params;
mod reference;
pub mod rnn;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng, Vector};
pub use loss::{LossKind, Target};
pub use model::{Evaluation, Model, Readout};
pub use params::{Bundle, Parameters};
