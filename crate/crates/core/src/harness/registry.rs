use std::fmt;
use std::str::FromStr;

use crate::bidir::BidirParams;
use crate::error::{Error, Result};
use crate::gru::{GruParams, GruVariant};
use crate::linalg::{Real, Rng, Vector};
use crate::loss::{LossKind, Target};
use crate::lstm::{LstmParams, LstmVariant};
use crate::model::{Evaluation, Model};
use crate::params::{Block, BlockMut, Bundle, Parameters};
use crate::rnn::{InitScheme, LeakyConfig, RnnParams, RnnVariant};

/// Every trainable model configuration the harness knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    RnnVanilla,
    RnnIdentity,
    RnnDelay,
    RnnLeaky,
    LstmVanilla,
    LstmNoPeepholes,
    LstmOriginal,
    LstmFullRecurrence,
    GruFull,
    GruMinimal,
    BiRnn,
    BiLstm,
}

/// Delay set of [`Family::RnnDelay`].
pub const DELAYS: [usize; 2] = [1, 3];

impl Family {
    pub const ALL: [Family; 12] = [
        Family::RnnVanilla,
        Family::RnnIdentity,
        Family::RnnDelay,
        Family::RnnLeaky,
        Family::LstmVanilla,
        Family::LstmNoPeepholes,
        Family::LstmOriginal,
        Family::LstmFullRecurrence,
        Family::GruFull,
        Family::GruMinimal,
        Family::BiRnn,
        Family::BiLstm,
    ];

    pub const GROUPS: [&'static str; 5] = ["rnn", "lstm", "gru", "birnn", "bilstm"];

    pub fn name(self) -> &'static str {
        match self {
            Family::RnnVanilla => "rnn-vanilla",
            Family::RnnIdentity => "rnn-identity",
            Family::RnnDelay => "rnn-delay",
            Family::RnnLeaky => "rnn-leaky",
            Family::LstmVanilla => "lstm-vanilla",
            Family::LstmNoPeepholes => "lstm-no-peepholes",
            Family::LstmOriginal => "lstm-original",
            Family::LstmFullRecurrence => "lstm-fgr",
            Family::GruFull => "gru-full",
            Family::GruMinimal => "gru-minimal",
            Family::BiRnn => "birnn",
            Family::BiLstm => "bilstm",
        }
    }

    pub fn group(self) -> &'static str {
        match self {
            Family::RnnVanilla | Family::RnnIdentity | Family::RnnDelay | Family::RnnLeaky => "rnn",
            Family::LstmVanilla | Family::LstmNoPeepholes | Family::LstmOriginal | Family::LstmFullRecurrence => {
                "lstm"
            }
            Family::GruFull | Family::GruMinimal => "gru",
            Family::BiRnn => "birnn",
            Family::BiLstm => "bilstm",
        }
    }

    /// Families matching a family name, a group name, or `all`.
    pub fn select(name: &str) -> Result<Vec<Family>> {
        let name = name.trim();
        if name == "all" {
            return Ok(Self::ALL.to_vec());
        }
        if let Ok(f) = name.parse::<Family>() {
            return Ok(vec![f]);
        }
        let picked: Vec<Family> = Self::ALL.into_iter().filter(|f| f.group() == name).collect();
        if picked.is_empty() {
            return Err(Error::invalid(format!("unknown model family '{name}'")));
        }
        Ok(picked)
    }

    fn lstm_variant(self) -> Option<LstmVariant> {
        match self {
            Family::LstmVanilla | Family::BiLstm => Some(LstmVariant::VANILLA),
            Family::LstmNoPeepholes => Some(LstmVariant::NO_PEEPHOLES),
            Family::LstmOriginal => Some(LstmVariant::ORIGINAL),
            Family::LstmFullRecurrence => Some(LstmVariant::FULL_GATE_RECURRENCE),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown model family '{s}'")))
    }
}

/// How leaky time constants are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Fixed(f64),
    /// Per unit, `exp` of a uniform draw in `[ln lo, ln hi]`.
    LogUniform { lo: f64, hi: f64 },
}

impl TauSpec {
    fn sample(&self, p: usize, rng: &mut Rng) -> Result<LeakyConfig> {
        match *self {
            TauSpec::Fixed(tau) => LeakyConfig::uniform(p, tau),
            TauSpec::LogUniform { lo, hi } => {
                if !(lo >= 1.0 && hi >= lo) {
                    return Err(Error::invalid(format!("time constant range [{lo}, {hi}] must satisfy 1 <= lo <= hi")));
                }
                let (a, b) = (lo.ln(), hi.ln());
                LeakyConfig::new(Vector::from_fn(p, |_| rng.uniform(a, b).exp()))
            }
        }
    }
}

impl fmt::Display for TauSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSpec::Fixed(t) => write!(f, "{t}"),
            TauSpec::LogUniform { lo, hi } => write!(f, "{lo}..{hi}"),
        }
    }
}

impl FromStr for TauSpec {
    type Err = Error;

    /// `<tau>` or `<lo>..<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad time constant '{s}'"));
        match s.split_once("..") {
            Some((lo, hi)) => Ok(TauSpec::LogUniform {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: hi.trim().parse().map_err(|_| bad())?,
            }),
            None => Ok(TauSpec::Fixed(s.trim().parse().map_err(|_| bad())?)),
        }
    }
}

/// Everything needed to build a freshly initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
    /// Recurrent weight scheme for the simple recurrent families.
    pub init: InitScheme,
    pub tau: TauSpec,
}

impl ModelSpec {
    pub fn new(family: Family, hidden: usize, input: usize, output: usize) -> Self {
        Self {
            family,
            hidden,
            input,
            output,
            init: InitScheme::Uniform,
            tau: TauSpec::LogUniform { lo: 1.0, hi: 10.0 },
        }
    }

    /// Widest hidden layer whose parameter count stays within `budget`.
    pub fn matched(family: Family, budget: usize, input: usize, output: usize) -> Result<Self> {
        let mut best = None;
        for hidden in 1.. {
            let spec = Self::new(family, hidden, input, output);
            if spec.build(&mut Rng::seed_from_u64(0))?.num_params() > budget {
                break;
            }
            best = Some(spec);
        }
        best.ok_or_else(|| Error::invalid(format!("{family} does not fit in {budget} parameters")))
    }

    pub fn build(&self, rng: &mut Rng) -> Result<AnyModel> {
        let dims = (self.hidden, self.input, self.output);
        if self.hidden == 0 || self.input == 0 || self.output == 0 {
            return Err(Error::invalid("model widths must be positive"));
        }
        let f = self.family;
        Ok(match f {
            Family::RnnVanilla => AnyModel::Rnn(RnnParams::init(RnnVariant::Vanilla, &[1], dims, &self.init, rng)?),
            Family::RnnIdentity => {
                AnyModel::Rnn(RnnParams::init(RnnVariant::IdentityPlus, &[1], dims, &self.init, rng)?)
            }
            Family::RnnDelay => AnyModel::Rnn(RnnParams::init(RnnVariant::Vanilla, &DELAYS, dims, &self.init, rng)?),
            Family::RnnLeaky => {
                let cfg = self.tau.sample(self.hidden, rng)?;
                AnyModel::Rnn(RnnParams::init(RnnVariant::Leaky(cfg), &[1], dims, &self.init, rng)?)
            }
            Family::LstmVanilla | Family::LstmNoPeepholes | Family::LstmOriginal | Family::LstmFullRecurrence => {
                AnyModel::Lstm(LstmParams::init(f.lstm_variant().expect("lstm family"), dims, rng))
            }
            Family::GruFull => AnyModel::Gru(GruParams::init(GruVariant::FullyGated, dims, rng)),
            Family::GruMinimal => AnyModel::Gru(GruParams::init(GruVariant::Minimal, dims, rng)),
            Family::BiRnn => AnyModel::Bidir(BidirParams::rnn(RnnVariant::Vanilla, &[1], dims, &self.init, rng)?),
            Family::BiLstm => AnyModel::Bidir(BidirParams::lstm(LstmVariant::VANILLA, dims, rng)?),
        })
    }
}

/// A model of any supported family behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Rnn(RnnParams),
    Lstm(LstmParams),
    Gru(GruParams),
    Bidir(BidirParams),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Rnn($m) => $body,
            AnyModel::Lstm($m) => $body,
            AnyModel::Gru($m) => $body,
            AnyModel::Bidir($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Rnn(_) => "rnn",
            AnyModel::Lstm(_) => "lstm",
            AnyModel::Gru(_) => "gru",
            AnyModel::Bidir(_) => "bidir",
        }
    }

    /// Bundle with a leading `model=<kind>` header pair.
    pub fn to_bundle(&self) -> Bundle {
        let mut b = dispatch!(self, m => m.to_bundle());
        b.header.insert(0, ("model".into(), self.kind().into()));
        b
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        Ok(match bundle.get_header("model")? {
            "rnn" => AnyModel::Rnn(RnnParams::from_bundle(bundle)?),
            "lstm" => AnyModel::Lstm(LstmParams::from_bundle(bundle)?),
            "gru" => AnyModel::Gru(GruParams::from_bundle(bundle)?),
            "bidir" => AnyModel::Bidir(BidirParams::from_bundle(bundle)?),
            other => return Err(Error::parse(1, format!("unknown model kind '{other}'"))),
        })
    }
}

impl Parameters for AnyModel {
    fn blocks(&self) -> Vec<Block<'_>> {
        dispatch!(self, m => m.blocks())
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        dispatch!(self, m => m.blocks_mut())
    }
}

impl Model for AnyModel {
    fn input_width(&self) -> usize {
        dispatch!(self, m => m.input_width())
    }

    fn output_width(&self) -> usize {
        dispatch!(self, m => m.output_width())
    }

    fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        dispatch!(self, m => m.predict(inputs))
    }

    fn evaluate(&self, inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<Evaluation<Self>> {
        Ok(match self {
            AnyModel::Rnn(m) => wrap(m.evaluate(inputs, targets, kind)?, AnyModel::Rnn),
            AnyModel::Lstm(m) => wrap(m.evaluate(inputs, targets, kind)?, AnyModel::Lstm),
            AnyModel::Gru(m) => wrap(m.evaluate(inputs, targets, kind)?, AnyModel::Gru),
            AnyModel::Bidir(m) => wrap(m.evaluate(inputs, targets, kind)?, AnyModel::Bidir),
        })
    }

    fn reference_loss<R: Real>(&self, flat: &[R], inputs: &[Vector], targets: &[Target], kind: LossKind) -> Result<R> {
        dispatch!(self, m => m.reference_loss(flat, inputs, targets, kind))
    }
}

fn wrap<P>(e: Evaluation<P>, f: impl FnOnce(P) -> AnyModel) -> Evaluation<AnyModel> {
    Evaluation {
        loss: e.loss,
        outputs: e.outputs,
        grads: f(e.grads),
    }
}
