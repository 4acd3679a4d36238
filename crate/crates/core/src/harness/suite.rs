use super::registry::{AnyModel, Family, ModelSpec};
use crate::error::Result;
use crate::gradcheck::{gradcheck, GradCheckReport};
use crate::linalg::{Rng, Vector};
use crate::loss::{LossKind, Target};
use crate::params::Parameters;

/// Largest width and length a suite instance draws.
pub const SUITE_MAX_WIDTH: usize = 6;
pub const SUITE_MAX_LEN: usize = 8;

/// A random model, sequence and target set for one gradient check.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub model: AnyModel,
    pub inputs: Vec<Vector>,
    pub targets: Vec<Target>,
    pub kind: LossKind,
}

impl CheckInstance {
    /// Widths in `[2, SUITE_MAX_WIDTH]`, length in `[2, SUITE_MAX_LEN]`, every
    /// parameter jittered by up to ±0.2 so no bias sits at exactly zero. Odd
    /// seeds score with cross-entropy, even ones with squared error.
    pub fn draw(family: Family, seed: u64) -> Result<Self> {
        let mut rng = Rng::child(seed, &format!("gradcheck/{family}"));
        let mut width = || 2 + rng.below(SUITE_MAX_WIDTH - 1);
        let (p, d, q) = (width(), width(), width());
        let len = 2 + rng.below(SUITE_MAX_LEN - 1);
        let mut model = ModelSpec::new(family, p, d, q).build(&mut rng)?;
        for b in model.blocks_mut() {
            for v in b.values.iter_mut() {
                *v += rng.uniform(-0.2, 0.2);
            }
        }
        let inputs = (0..len).map(|_| Vector::from_fn(d, |_| rng.uniform(-1.0, 1.0))).collect();
        let (kind, targets) = if seed % 2 == 1 {
            (LossKind::CrossEntropy, (0..len).map(|_| Target::Class(rng.below(q))).collect())
        } else {
            let targets = (0..len)
                .map(|_| Target::Value(Vector::from_fn(q, |_| rng.uniform(-1.0, 1.0))))
                .collect();
            (LossKind::SquaredError, targets)
        };
        Ok(Self {
            model,
            inputs,
            targets,
            kind,
        })
    }

    pub fn check(&self, eps: f64) -> Result<GradCheckReport> {
        gradcheck(&self.model, &self.inputs, &self.targets, self.kind, eps)
    }
}

/// Gradient check of a freshly drawn instance.
pub fn family_gradcheck(family: Family, seed: u64, eps: f64) -> Result<GradCheckReport> {
    CheckInstance::draw(family, seed)?.check(eps)
}
