use crate::error::{Error, Result};
use crate::linalg::{Rng, Vector};
use crate::lstm::{LstmCell, LstmVariant};
use crate::params::Bundle;

use super::{BidirEncoder, DirCell};

/// Stack of bidirectional LSTM layers whose concatenated states are mixed
/// into one embedding `γ Σ_l s_l [→h_t^(l); ←h_t^(l)]`.
///
/// Layer `l > 1` reads the concatenated `2p` states of layer `l − 1`. Inside
/// the stack every layer's output is its hidden state. `γ` and `s` are fixed
/// constants, not normalized and not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmoStack {
    layers: Vec<BidirEncoder>,
    pub gamma: f64,
    pub s: Vec<f64>,
}

impl ElmoStack {
    pub fn new(layers: Vec<BidirEncoder>, gamma: f64, s: Vec<f64>) -> Result<Self> {
        let stack = Self { layers, gamma, s };
        stack.validate()?;
        Ok(stack)
    }

    /// `layers` layers of width `p` over `d`-wide inputs, `γ = 1`, `s_l = 1/L`.
    pub fn init(variant: LstmVariant, layers: usize, p: usize, d: usize, rng: &mut Rng) -> Result<Self> {
        let built = (0..layers)
            .map(|l| {
                let input = if l == 0 { d } else { 2 * p };
                BidirEncoder::new(
                    DirCell::Lstm(LstmCell::init(variant, p, input, rng)),
                    DirCell::Lstm(LstmCell::init(variant, p, input, rng)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let s = vec![1.0 / layers.max(1) as f64; layers];
        Self::new(built, 1.0, s)
    }

    /// Checks that the stack is nonempty, LSTM throughout, and that widths
    /// chain from `d` through `2p`.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.layers.first() else {
            return Err(Error::invalid("an embedding stack needs at least one layer"));
        };
        if self.s.len() != self.layers.len() {
            return Err(Error::Length {
                what: "layer weights s",
                got: self.s.len(),
                expected: self.layers.len(),
            });
        }
        let p = first.hidden_width();
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.kind() != "lstm" {
                return Err(Error::invalid(format!("layer {} is not an LSTM layer", l + 1)));
            }
            if layer.hidden_width() != p {
                return Err(Error::Dimension {
                    op: "stack hidden width",
                    left: (p, 1),
                    right: (layer.hidden_width(), 1),
                });
            }
            if l > 0 && layer.input_width() != 2 * p {
                return Err(Error::Dimension {
                    op: "stack layer input",
                    left: (2 * p, 1),
                    right: (layer.input_width(), 1),
                });
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[BidirEncoder] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].hidden_width()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    /// `h_t^(l) = [→h_t^(l); ←h_t^(l)]` for every layer, outermost index `l`.
    pub fn layer_states(&self, inputs: &[Vector]) -> Result<Vec<Vec<Vector>>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut feed: Vec<Vector> = inputs.to_vec();
        for layer in &self.layers {
            let h = layer.run(&feed)?.concatenated();
            feed = h.clone();
            out.push(h);
        }
        Ok(out)
    }

    /// Mixes precomputed layer states with the given weights.
    pub fn combine(states: &[Vec<Vector>], gamma: f64, s: &[f64]) -> Result<Vec<Vector>> {
        if states.len() != s.len() || states.is_empty() {
            return Err(Error::Length {
                what: "layer weights s",
                got: s.len(),
                expected: states.len(),
            });
        }
        let len = states[0].len();
        let width = states[0].first().map_or(0, Vector::len);
        Ok((0..len)
            .map(|t| {
                let mut e = Vector::zeros(width);
                for (layer, &w) in states.iter().zip(s) {
                    e.axpy(gamma * w, &layer[t]);
                }
                e
            })
            .collect())
    }

    /// Per-step embeddings of width `2p`.
    pub fn embed(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        Self::combine(&self.layer_states(inputs)?, self.gamma, &self.s)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.prefixed_blocks("").iter().map(|b| b.values.len()).sum::<usize>())
            .sum()
    }

    pub fn to_bundle(&self) -> Bundle {
        let DirCell::Lstm(first) = &self.layers[0].fwd else {
            unreachable!("validated stack")
        };
        let mut b = first
            .header(Bundle::new())
            .header("layers", self.layers.len())
            .header("gamma", format!("{:.16e}", self.gamma));
        for (l, layer) in self.layers.iter().enumerate() {
            b = layer.write_sections(b, &format!("layer{}/", l + 1));
        }
        b.vector("s", &Vector::from(self.s.as_slice()))
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let count: usize = bundle
            .get_header("layers")?
            .parse()
            .map_err(|_| Error::parse(1, "bad layer count"))?;
        let gamma: f64 = bundle
            .get_header("gamma")?
            .parse()
            .map_err(|_| Error::parse(1, "bad gamma"))?;
        let variant = LstmCell::variant_from_header(bundle)?;
        let layers = (1..=count)
            .map(|l| {
                let read = |dir: &str| LstmCell::read_sections(bundle, variant, &format!("layer{l}/{dir}")).map(DirCell::Lstm);
                BidirEncoder::new(read(super::FWD)?, read(super::BWD)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, gamma, bundle.get_vector("s")?.into_inner())
    }
}
