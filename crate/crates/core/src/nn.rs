//! Dense feed-forward regressor with the symmetric funnel layout
//! `[k1 -> W -> W/2 -> ... -> W/2 -> W -> k2]`, trained with Adam on the
//! mean squared error of standardized latent targets.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{column_stats, standardize};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Elu];

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative from the pre-activation `x` and activation `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Elu => "elu",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "elu" => Ok(Activation::Elu),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnArch {
    pub input: usize,
    pub output: usize,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
}

impl NnArch {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.width < 2 || self.input < 1 || self.output < 1 {
            return Err(Error::InvalidArgument(format!(
                "invalid architecture: depth {} width {} input {} output {}",
                self.depth, self.width, self.input, self.output
            )));
        }
        Ok(())
    }

    /// `[W, W/2, ..., W/2, W]`; a single hidden layer is just `[W]`.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let half = (self.width / 2).max(1);
        (0..self.depth).map(|i| if i == 0 || i + 1 == self.depth { self.width } else { half }).collect()
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(self.hidden_widths());
        w.push(self.output);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, decay: 1.0, batch_size: 16, max_epochs: 2000, patience: Some(50), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay {} outside (0, 1]", self.decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub(crate) arch: NnArch,
    pub(crate) layers: Vec<Layer>,
    pub(crate) in_mean: Vec<f64>,
    pub(crate) in_std: Vec<f64>,
    pub(crate) out_mean: Vec<f64>,
    pub(crate) out_std: Vec<f64>,
    pub(crate) history: Vec<EpochLoss>,
    pub(crate) best_epoch: Option<usize>,
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl NnModel {
    /// Uniform fan-in initialization `U(-sqrt(3/fan_in), sqrt(3/fan_in))`,
    /// zero biases, identity standardization.
    pub fn init(arch: NnArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_from_seed(seed);
        let widths = arch.layer_widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (3.0 / w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(NnModel {
            arch,
            layers,
            in_mean: vec![0.0; arch.input],
            in_std: vec![1.0; arch.input],
            out_mean: vec![0.0; arch.output],
            out_std: vec![1.0; arch.output],
            history: Vec::new(),
            best_epoch: None,
        })
    }

    pub fn arch(&self) -> &NnArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn history(&self) -> &[EpochLoss] {
        &self.history
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sets standardization statistics from raw training data.
    pub fn set_standardization(&mut self, z_in: &DMatrix<f64>, z_out: &DMatrix<f64>) -> Result<()> {
        self.check_widths(z_in, Some(z_out))?;
        (self.in_mean, self.in_std) = column_stats(z_in);
        (self.out_mean, self.out_std) = column_stats(z_out);
        Ok(())
    }

    fn check_widths(&self, z_in: &DMatrix<f64>, z_out: Option<&DMatrix<f64>>) -> Result<()> {
        if z_in.ncols() != self.arch.input {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                z_in.ncols(),
                self.arch.input
            )));
        }
        if let Some(o) = z_out {
            if o.ncols() != self.arch.output || o.nrows() != z_in.nrows() {
                return Err(Error::Dimension(format!(
                    "target is {}x{}, expected {}x{}",
                    o.nrows(),
                    o.ncols(),
                    z_in.nrows(),
                    self.arch.output
                )));
            }
        }
        Ok(())
    }

    /// Forward pass on standardized inputs (rows are samples). Returns the
    /// pre-activations and activations of every layer; the last activation
    /// is the linear output.
    fn forward_standardized(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len() + 1);
        act.push(x.transpose());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let a = affine(layer, act.last().unwrap());
            let h = if i == last { a.clone() } else { a.map(|v| self.arch.activation.apply(v)) };
            pre.push(a);
            act.push(h);
        }
        (pre, act)
    }

    /// Predictions in raw output units, `m x k2`.
    pub fn forward(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_widths(z, None)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network input".into()));
        }
        let x = standardize(z, &self.in_mean, &self.in_std);
        let (_, act) = self.forward_standardized(&x);
        let out = act.last().unwrap();
        Ok(DMatrix::from_fn(out.ncols(), out.nrows(), |i, j| out[(j, i)] * self.out_std[j] + self.out_mean[j]))
    }

    /// Mean squared error over batch and output dims (standardized units)
    /// and its gradient with respect to every parameter.
    pub fn loss_grad(&self, z_in: &DMatrix<f64>, z_out: &DMatrix<f64>) -> Result<(f64, Gradients)> {
        self.check_widths(z_in, Some(z_out))?;
        let x = standardize(z_in, &self.in_mean, &self.in_std);
        let t = standardize(z_out, &self.out_mean, &self.out_std).transpose();
        Ok(self.loss_grad_standardized(&x, &t))
    }

    fn loss_grad_standardized(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> (f64, Gradients) {
        let (pre, act) = self.forward_standardized(x);
        let out = act.last().unwrap();
        let count = (out.nrows() * out.ncols()) as f64;
        let diff = out - t;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = &delta * act[i].transpose();
            let gb = delta.column_sum();
            grads.push(Layer { weights: gw, bias: gb });
            if i > 0 {
                let mut back = self.layers[i].weights.tr_mul(&delta);
                let (p, a) = (&pre[i - 1], &act[i]);
                for ((b, pv), av) in back.iter_mut().zip(p.iter()).zip(a.iter()) {
                    *b *= self.arch.activation.derivative(*pv, *av);
                }
                delta = back;
            }
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    fn standardized_loss(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
        let (_, act) = self.forward_standardized(x);
        let out = act.last().unwrap();
        (out - t).norm_squared() / (out.nrows() * out.ncols()) as f64
    }

    /// Trains in place: standardization from the training set, Adam
    /// (beta1 0.9, beta2 0.999), seeded shuffling, per-epoch learning-rate
    /// decay, and early stopping on validation MSE. Keeps the parameters of
    /// the best validation epoch (the last epoch when there is no
    /// validation data).
    pub fn train(
        &mut self,
        train_in: &DMatrix<f64>,
        train_out: &DMatrix<f64>,
        val: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
        config: &TrainConfig,
    ) -> Result<()> {
        config.validate()?;
        if train_in.nrows() == 0 {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        self.set_standardization(train_in, train_out)?;
        let x = standardize(train_in, &self.in_mean, &self.in_std);
        let t = standardize(train_out, &self.out_mean, &self.out_std).transpose();
        let val_data = match val {
            Some((vi, vo)) if vi.nrows() > 0 => {
                self.check_widths(vi, Some(vo))?;
                Some((
                    standardize(vi, &self.in_mean, &self.in_std),
                    standardize(vo, &self.out_mean, &self.out_std).transpose(),
                ))
            }
            _ => None,
        };

        let zeros = |l: &Layer| Layer {
            weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
            bias: DVector::zeros(l.bias.len()),
        };
        let mut m1: Vec<Layer> = self.layers.iter().map(zeros).collect();
        let mut m2: Vec<Layer> = self.layers.iter().map(zeros).collect();
        let mut rng = rng_from_seed(config.seed);
        let n = x.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        let mut lr = config.learning_rate;
        let mut step = 0i32;
        let mut best: Option<(f64, usize, Vec<Layer>)> = None;
        self.history.clear();

        for epoch in 0..config.max_epochs {
            order.shuffle(&mut rng);
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let xb = x.select_rows(chunk.iter());
                let tb = t.select_columns(chunk.iter());
                let (loss, grads) = self.loss_grad_standardized(&xb, &tb);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite training loss at epoch {epoch}, batch {b}, learning rate {lr:e}"
                    )));
                }
                step += 1;
                let c1 = 1.0 - BETA1.powi(step);
                let c2 = 1.0 - BETA2.powi(step);
                for ((layer, g), (a, v)) in
                    self.layers.iter_mut().zip(&grads.layers).zip(m1.iter_mut().zip(m2.iter_mut()))
                {
                    adam_update(
                        layer.weights.as_mut_slice(),
                        g.weights.as_slice(),
                        a.weights.as_mut_slice(),
                        v.weights.as_mut_slice(),
                        lr,
                        c1,
                        c2,
                    );
                    adam_update(
                        layer.bias.as_mut_slice(),
                        g.bias.as_slice(),
                        a.bias.as_mut_slice(),
                        v.bias.as_mut_slice(),
                        lr,
                        c1,
                        c2,
                    );
                }
            }
            let train_loss = self.standardized_loss(&x, &t);
            if !train_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss after epoch {epoch}, learning rate {lr:e}"
                )));
            }
            let val_loss = val_data.as_ref().map(|(vx, vt)| self.standardized_loss(vx, vt));
            self.history.push(EpochLoss { epoch, train: train_loss, val: val_loss, learning_rate: lr });
            if let Some(vl) = val_loss {
                let improved = best.as_ref().is_none_or(|(b, _, _)| vl < *b);
                if improved {
                    best = Some((vl, epoch, self.layers.clone()));
                } else if let (Some(p), Some((_, be, _))) = (config.patience, best.as_ref()) {
                    if epoch - be >= p {
                        break;
                    }
                }
            }
            lr *= config.decay;
        }
        match best {
            Some((_, epoch, layers)) => {
                self.layers = layers;
                self.best_epoch = Some(epoch);
            }
            None => self.best_epoch = self.history.last().map(|h| h.epoch),
        }
        Ok(())
    }

    /// Writes `epoch,train_loss,val_loss,learning_rate` rows.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_loss", "learning_rate"])?;
        for h in &self.history {
            w.write_record([
                h.epoch.to_string(),
                h.train.to_string(),
                h.val.map(|v| v.to_string()).unwrap_or_default(),
                h.learning_rate.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }

    pub(crate) fn from_parts(
        arch: NnArch,
        layers: Vec<Layer>,
        stats: [Vec<f64>; 4],
        history: Vec<EpochLoss>,
        best_epoch: Option<usize>,
    ) -> Result<Self> {
        arch.validate()?;
        let widths = arch.layer_widths();
        if layers.len() + 1 != widths.len() {
            return Err(Error::Dimension("layer count does not match architecture".into()));
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if l.weights.shape() != (w[1], w[0]) || l.bias.len() != w[1] {
                return Err(Error::Dimension("layer shape does not match architecture".into()));
            }
        }
        let [in_mean, in_std, out_mean, out_std] = stats;
        if in_mean.len() != arch.input
            || in_std.len() != arch.input
            || out_mean.len() != arch.output
            || out_std.len() != arch.output
        {
            return Err(Error::Dimension("standardization widths do not match architecture".into()));
        }
        Ok(NnModel { arch, layers, in_mean, in_std, out_mean, out_std, history, best_epoch })
    }
}

/// `W x + b` for every column of `x`. Each output column is accumulated in
/// the same fixed order whatever the batch size, so batched and row-wise
/// predictions agree bit for bit.
fn affine(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let w = &layer.weights;
    let (rows, inner) = w.shape();
    let mut out = DMatrix::zeros(rows, x.ncols());
    for c in 0..x.ncols() {
        let o = &mut out.as_mut_slice()[c * rows..(c + 1) * rows];
        o.copy_from_slice(layer.bias.as_slice());
        for k in 0..inner {
            let xv = x[(k, c)];
            let wk = &w.as_slice()[k * rows..(k + 1) * rows];
            for (ov, wv) in o.iter_mut().zip(wk) {
                *ov += wv * xv;
            }
        }
    }
    out
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}
