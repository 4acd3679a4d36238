//! Echo state networks: a fixed random reservoir with a linear readout
//! fitted by regularized least squares.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, spectral_radius, tanh, Matrix, Rng, Vector};
use crate::model::check_inputs;
use crate::params::Bundle;

pub const DEFAULT_LAMBDA: f64 = 0.95;
pub const DEFAULT_RIDGE: f64 = 1e-8;

const SPECTRAL_TOL: f64 = 1e-12;
const SPECTRAL_ITERS: usize = 20_000;
const MAX_RESAMPLES: usize = 100;

/// Construction parameters of a [`Reservoir`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirConfig {
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
    /// Fraction of nonzero reservoir entries, in `(0, 1]`.
    pub sparsity: f64,
    /// Target spectral radius of the reservoir matrix.
    pub lambda: f64,
    /// Half-width of the uniform input weights.
    pub input_scale: f64,
}

impl ReservoirConfig {
    pub fn new(hidden: usize, input: usize, output: usize) -> Self {
        Self {
            hidden,
            input,
            output,
            sparsity: 0.1,
            lambda: DEFAULT_LAMBDA,
            input_scale: 1.0,
        }
    }

    pub fn sparsity(self, sparsity: f64) -> Self {
        Self { sparsity, ..self }
    }

    pub fn lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn input_scale(self, input_scale: f64) -> Self {
        Self { input_scale, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.input == 0 || self.output == 0 {
            return Err(Error::invalid("reservoir widths must be positive"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::invalid(format!("sparsity must lie in (0, 1], got {}", self.sparsity)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("target spectral radius must be positive, got {}", self.lambda)));
        }
        if !(self.input_scale >= 0.0 && self.input_scale.is_finite()) {
            return Err(Error::invalid("input scale must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Fixed recurrent reservoir plus its trainable readout `W_out ∈ q×(p+1)`,
/// whose last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    w_res: Matrix,
    w_in: Matrix,
    config: ReservoirConfig,
    seed: u64,
    radius: f64,
    pub readout: Matrix,
}

impl Reservoir {
    /// Samples a sparse reservoir and rescales it to the target radius.
    /// Draws whose mask is empty or whose radius vanishes are discarded.
    pub fn build(config: ReservoirConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ReservoirConfig { hidden: p, input: d, .. } = config;
        let mut rng = Rng::child(seed, "reservoir");
        for _ in 0..MAX_RESAMPLES {
            let raw = Matrix::from_fn(p, p, |_, _| {
                let keep = rng.bernoulli(config.sparsity);
                let v = rng.uniform(-1.0, 1.0);
                if keep {
                    v
                } else {
                    0.0
                }
            });
            if raw.max_abs() == 0.0 {
                continue;
            }
            let rho = spectral_radius(&raw, SPECTRAL_TOL, SPECTRAL_ITERS)?.radius;
            if !(rho > 1e-12) {
                continue;
            }
            let w_res = raw.scale(config.lambda / rho);
            let radius = spectral_radius(&w_res, SPECTRAL_TOL, SPECTRAL_ITERS)?.radius;
            let s = config.input_scale;
            let w_in = Matrix::from_fn(p, d, |_, _| rng.uniform(-s, s));
            return Ok(Self {
                w_res,
                w_in,
                config,
                seed,
                radius,
                readout: Matrix::zeros(config.output, p + 1),
            });
        }
        Err(Error::Singular(format!(
            "no reservoir with nonzero spectral radius after {MAX_RESAMPLES} draws at sparsity {}",
            config.sparsity
        )))
    }

    pub fn w_res(&self) -> &Matrix {
        &self.w_res
    }

    pub fn w_in(&self) -> &Matrix {
        &self.w_in
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Spectral radius of `W_res` measured after rescaling.
    pub fn measured_radius(&self) -> f64 {
        self.radius
    }

    pub fn hidden_width(&self) -> usize {
        self.w_res.rows()
    }

    pub fn input_width(&self) -> usize {
        self.w_in.cols()
    }

    pub fn output_width(&self) -> usize {
        self.readout.rows()
    }

    /// Hash of the bit patterns of `W_res` and `W_in`.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in [&self.w_res, &self.w_in] {
            m.shape().hash(&mut h);
            for v in m.as_slice() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// States `h_t = tanh(W_res h_{t−1} + W_in x_t)` from `h_0 = 0`, one row per step.
    pub fn run(&self, inputs: &[Vector]) -> Result<Matrix> {
        self.run_from(&Vector::zeros(self.hidden_width()), inputs)
    }

    pub fn run_from(&self, h0: &Vector, inputs: &[Vector]) -> Result<Matrix> {
        if inputs.is_empty() {
            return Err(Error::invalid("reservoir input sequence is empty"));
        }
        check_inputs(inputs, self.input_width())?;
        let p = self.hidden_width();
        if h0.len() != p {
            return Err(Error::Length {
                what: "initial reservoir state",
                got: h0.len(),
                expected: p,
            });
        }
        let mut states = Matrix::zeros(inputs.len(), p);
        let mut h = h0.clone();
        for (t, x) in inputs.iter().enumerate() {
            let mut a = self.w_res.mul_vec(&h);
            self.w_in.mul_vec_acc(x, &mut a);
            h = a.map(tanh);
            states.as_mut_slice()[t * p..(t + 1) * p].copy_from_slice(h.as_slice());
        }
        Ok(states)
    }

    /// Readout outputs `W_out [h_t; 1]` for each row of `states`.
    pub fn readout_outputs(&self, states: &Matrix) -> Result<Vec<Vector>> {
        let p = self.hidden_width();
        if states.cols() != p {
            return Err(Error::Dimension {
                op: "readout_outputs",
                left: self.readout.shape(),
                right: states.shape(),
            });
        }
        Ok((0..states.rows())
            .map(|t| {
                let mut z = Vector::from(states.row(t));
                z = z.concat(&Vector::ones(1));
                self.readout.mul_vec(&z)
            })
            .collect())
    }

    pub fn predict(&self, inputs: &[Vector]) -> Result<Vec<Vector>> {
        self.readout_outputs(&self.run(inputs)?)
    }

    /// Runs the reservoir, drops the first `washout` states and fits the
    /// readout to the remaining targets. Returns the training MSE.
    pub fn fit(&mut self, inputs: &[Vector], targets: &[Vector], washout: usize, ridge: f64) -> Result<f64> {
        self.fit_many(&[(inputs, targets)], washout, ridge)
    }

    /// [`Reservoir::fit`] over several sequences, each run from the zero
    /// state with its own washout; the kept states share one readout.
    pub fn fit_many(&mut self, sequences: &[(&[Vector], &[Vector])], washout: usize, ridge: f64) -> Result<f64> {
        let p = self.hidden_width();
        let q = self.output_width();
        let mut kept = Vec::new();
        let mut kept_targets = Vec::new();
        for &(inputs, targets) in sequences {
            if targets.len() != inputs.len() {
                return Err(Error::Length {
                    what: "targets",
                    got: targets.len(),
                    expected: inputs.len(),
                });
            }
            if washout >= inputs.len() {
                return Err(Error::invalid(format!(
                    "washout {washout} leaves no states out of {}",
                    inputs.len()
                )));
            }
            let states = self.run(inputs)?;
            kept.extend_from_slice(&states.as_slice()[washout * p..]);
            kept_targets.extend_from_slice(&targets[washout..]);
        }
        if kept_targets.is_empty() {
            return Err(Error::invalid("no sequences to fit"));
        }
        let kept = Matrix::from_vec(kept_targets.len(), p, kept)?;
        let y = stack_rows(&kept_targets, q)?;
        self.readout = train_readout(&kept, &y, ridge)?;
        let out = self.readout_outputs(&kept)?;
        Ok(mean_squared_error(&out, &kept_targets))
    }

    pub fn to_bundle(&self) -> Bundle {
        let c = &self.config;
        Bundle::new()
            .header("seed", self.seed)
            .header("sparsity", c.sparsity)
            .header("lambda", c.lambda)
            .header("input_scale", c.input_scale)
            .header("radius", format!("{:.16e}", self.radius))
            .matrix("W_res", &self.w_res)
            .matrix("W_in", &self.w_in)
            .matrix("W_out", &self.readout)
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let num = |key: &str| -> Result<f64> {
            let v = bundle.get_header(key)?;
            v.parse().map_err(|_| Error::parse(1, format!("bad value '{v}' for '{key}'")))
        };
        let seed = bundle
            .get_header("seed")?
            .parse()
            .map_err(|_| Error::parse(1, "bad seed"))?;
        let w_res = bundle.get_matrix("W_res")?;
        let w_in = bundle.get_matrix("W_in")?;
        let readout = bundle.get_matrix("W_out")?;
        let p = w_res.rows();
        if !w_res.is_square() || w_in.rows() != p || readout.cols() != p + 1 {
            return Err(Error::parse(0, "reservoir sections have inconsistent shapes"));
        }
        let config = ReservoirConfig {
            hidden: p,
            input: w_in.cols(),
            output: readout.rows(),
            sparsity: num("sparsity")?,
            lambda: num("lambda")?,
            input_scale: num("input_scale")?,
        };
        config.validate()?;
        Ok(Self {
            w_res,
            w_in,
            config,
            seed,
            radius: num("radius")?,
            readout,
        })
    }
}

/// Default washout length `min(50, T/10)`.
pub fn default_washout(len: usize) -> usize {
    50.min(len / 10)
}

fn stack_rows(rows: &[Vector], width: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::Length {
                what: "readout target",
                got: r.len(),
                expected: width,
            });
        }
        data.extend_from_slice(r.as_slice());
    }
    Matrix::from_vec(rows.len(), width, data)
}

/// Mean over every output component.
pub fn mean_squared_error(out: &[Vector], targets: &[Vector]) -> f64 {
    let n: usize = out.iter().map(Vector::len).sum();
    let s: f64 = out.iter().zip(targets).map(|(y, t)| y.sub(t).dot(&y.sub(t))).sum();
    s / n.max(1) as f64
}

/// Minimizer of `Σ_t ‖W [h_t; 1] − y_t‖² + ridge·‖W‖²_F` for states `T×p` and
/// targets `T×q`, via Cholesky on the `(p+1)×(p+1)` Gram matrix.
pub fn train_readout(states: &Matrix, targets: &Matrix, ridge: f64) -> Result<Matrix> {
    if states.rows() != targets.rows() {
        return Err(Error::Dimension {
            op: "train_readout",
            left: states.shape(),
            right: targets.shape(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge must be finite and nonnegative, got {ridge}")));
    }
    let (n, p) = states.shape();
    let q = targets.cols();
    let m = p + 1;
    let mut gram = Matrix::zeros(m, m);
    let mut cross = Matrix::zeros(m, q);
    for t in 0..n {
        let z: Vec<f64> = states.row(t).iter().copied().chain([1.0]).collect();
        let y = targets.row(t);
        for i in 0..m {
            for j in 0..=i {
                gram[(i, j)] += z[i] * z[j];
            }
            for k in 0..q {
                cross[(i, k)] += z[i] * y[k];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
        gram[(i, i)] += ridge;
    }
    let l = cholesky(&gram).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("readout normal equations ({msg}); raise the ridge")),
        other => other,
    })?;
    Ok(cholesky_solve(&l, &cross)?.transpose())
}
