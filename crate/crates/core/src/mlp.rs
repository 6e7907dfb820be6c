//! Two-layer classifier: ReLU hidden layer, softmax output, trained by
//! per-sample stochastic backpropagation on cross-entropy loss.
//!
//! Weight matrices carry their bias as the last column, so the hidden layer
//! is `H x (d+1)` and the output layer is `C x (H+1)`. Learning rates are
//! `hidden_rate_scale / N` and `output_rate_scale / N` where `N` is the size
//! of the set passed to [`MlpModel::train`], recomputed on every call.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const DEFAULT_HIDDEN: usize = 50;
pub const DEFAULT_HIDDEN_RATE_SCALE: f64 = 50.0;
pub const DEFAULT_OUTPUT_RATE_SCALE: f64 = 35.0;
/// Epoch budget of full-length runs.
pub const FULL_EPOCHS: usize = 50_000;
pub const DESK_EPOCHS: usize = 2_000;
/// Hidden-rate ceiling; only binds below 125 training samples at the default scale.
pub const DEFAULT_RATE_CAP: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Hidden-layer rate numerator; the rate is this over the training-set size.
    pub hidden_rate_scale: f64,
    pub output_rate_scale: f64,
    /// Ceiling on the hidden-layer rate for small training sets. Both rates
    /// shrink by the same factor, so their ratio is kept. `None` disables it.
    #[serde(default)]
    pub rate_cap: Option<f64>,
    pub epochs: usize,
    /// Stop once the mean epoch loss drops below this. Zero runs the full budget.
    pub loss_threshold: f64,
    pub shuffle: bool,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden: DEFAULT_HIDDEN,
            classes,
            hidden_rate_scale: DEFAULT_HIDDEN_RATE_SCALE,
            output_rate_scale: DEFAULT_OUTPUT_RATE_SCALE,
            rate_cap: Some(DEFAULT_RATE_CAP),
            epochs: DESK_EPOCHS,
            loss_threshold: 0.0,
            shuffle: true,
            seed: 0,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if self.classes < 2 {
            return bad("classes must be >= 2");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.hidden_rate_scale > 0.0 && self.hidden_rate_scale.is_finite())
            || !(self.output_rate_scale > 0.0 && self.output_rate_scale.is_finite())
        {
            return bad("learning rate scales must be positive and finite");
        }
        if self.rate_cap.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("rate_cap must be positive and finite");
        }
        if !(self.loss_threshold >= 0.0) {
            return bad("loss_threshold must be >= 0");
        }
        Ok(())
    }

    pub fn rates_for(&self, n: usize) -> LearningRates {
        let n = n.max(1) as f64;
        let (hidden, output) = (self.hidden_rate_scale / n, self.output_rate_scale / n);
        let shrink = match self.rate_cap {
            Some(cap) if hidden > cap => cap / hidden,
            _ => 1.0,
        };
        LearningRates {
            hidden: hidden * shrink,
            output: output * shrink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub hidden: f64,
    pub output: f64,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Class-probability vector produced by the softmax layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    /// Wraps an already-normalized probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Posterior(probs)
    }

    /// Numerically stable softmax.
    pub fn softmax(logits: &[f64]) -> Self {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Posterior(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> ClassLabel {
        ClassLabel(argmax(&self.0))
    }

    pub fn max_prob(&self) -> f64 {
        self.0[argmax(&self.0)]
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochBudget,
    LossThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean cross-entropy per epoch, accumulated during the pass.
    pub losses: Vec<f64>,
    pub epochs_run: usize,
    pub stop: StopReason,
}

/// Gradients of the loss with respect to both weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub w_hidden: Matrix,
    pub w_output: Matrix,
    pub rates: LearningRates,
}

impl MlpModel {
    /// Uniform weights in ±1/sqrt(fan_in) per layer, zero biases.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let (d, h, c) = (config.input_dim, config.hidden, config.classes);
        let mut rng = rng_from_seed(derive_seed(config.seed, stream::INIT, 0));
        let mut w_hidden = Matrix::zeros(h, d + 1);
        let a = 1.0 / (d as f64).sqrt();
        for r in 0..h {
            for v in &mut w_hidden.row_mut(r)[..d] {
                *v = rng.random_range(-a..=a);
            }
        }
        let mut w_output = Matrix::zeros(c, h + 1);
        let a = 1.0 / (h as f64).sqrt();
        for r in 0..c {
            for v in &mut w_output.row_mut(r)[..h] {
                *v = rng.random_range(-a..=a);
            }
        }
        let rates = config.rates_for(1);
        Ok(MlpModel {
            config,
            w_hidden,
            w_output,
            rates,
        })
    }

    /// All-zero weights; every input maps to the uniform posterior.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let (d, h, c) = (config.input_dim, config.hidden, config.classes);
        let rates = config.rates_for(1);
        Ok(MlpModel {
            config,
            w_hidden: Matrix::zeros(h, d + 1),
            w_output: Matrix::zeros(c, h + 1),
            rates,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn is_finite(&self) -> bool {
        self.w_hidden
            .data
            .iter()
            .chain(&self.w_output.data)
            .all(|v| v.is_finite())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations `W_hidden · [x; 1]`.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Vec<f64> {
        let d = self.config.input_dim;
        (0..self.config.hidden)
            .map(|r| {
                let w = self.w_hidden.row(r);
                dot(&w[..d], x) + w[d]
            })
            .collect()
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let hd = self.config.hidden;
        (0..self.config.classes)
            .map(|r| {
                let w = self.w_output.row(r);
                dot(&w[..hd], h) + w[hd]
            })
            .collect()
    }

    /// Posterior and hidden activations for one input.
    pub fn forward(&self, x: &[f64]) -> Result<(Posterior, Vec<f64>)> {
        self.check_dim(x)?;
        let mut h = self.hidden_preactivations(x);
        h.iter_mut().for_each(|v| *v = relu(*v));
        let p = Posterior::softmax(&self.logits(&h));
        Ok((p, h))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Posterior> {
        self.forward(x).map(|(p, _)| p)
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        self.predict_proba(x).map(|p| p.argmax())
    }

    /// Posteriors for every sample of `data`, in order. Computed in parallel.
    pub fn predict_proba_all(&self, data: &Dataset) -> Result<Vec<Posterior>> {
        if data.dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: data.dim(),
            });
        }
        data.samples()
            .par_iter()
            .map(|s| self.forward(&s.features).map(|(p, _)| p))
            .collect()
    }

    /// Cross-entropy `-ln p[y]` of a single sample.
    pub fn loss(&self, x: &[f64], y: ClassLabel) -> Result<f64> {
        let (p, _) = self.forward(x)?;
        Ok(-p.probs()[y.0].ln())
    }

    /// Mean cross-entropy over a batch.
    pub fn mean_loss(&self, batch: &[(Vec<f64>, ClassLabel)]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in batch {
            total += self.loss(x, *y)?;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    fn check_label(&self, y: ClassLabel) -> Result<()> {
        if y.0 >= self.config.classes {
            return Err(Error::InvalidConfig(format!(
                "label index {} out of range for {} classes",
                y.0, self.config.classes
            )));
        }
        Ok(())
    }

    /// Analytic gradient of `-ln p[y]` for one sample; also returns the loss.
    pub fn gradients(&self, x: &[f64], y: ClassLabel) -> Result<(Gradients, f64)> {
        self.check_dim(x)?;
        self.check_label(y)?;
        let mut g = Gradients {
            hidden: Matrix::zeros(self.w_hidden.rows, self.w_hidden.cols),
            output: Matrix::zeros(self.w_output.rows, self.w_output.cols),
        };
        let loss = self.accumulate(x, y, 1.0, &mut g);
        Ok((g, loss))
    }

    /// Adds `scale *` the per-sample gradient into `g`, returning the loss.
    fn accumulate(&self, x: &[f64], y: ClassLabel, scale: f64, g: &mut Gradients) -> f64 {
        let (d, hd, c) = (
            self.config.input_dim,
            self.config.hidden,
            self.config.classes,
        );
        let z = self.hidden_preactivations(x);
        let h: Vec<f64> = z.iter().map(|&v| relu(v)).collect();
        let p = Posterior::softmax(&self.logits(&h));
        let loss = -p.probs()[y.0].ln();

        let mut delta_out = p.0;
        delta_out[y.0] -= 1.0;

        for k in 0..c {
            let s = scale * delta_out[k];
            let row = g.output.row_mut(k);
            for (gv, &hv) in row[..hd].iter_mut().zip(&h) {
                *gv += s * hv;
            }
            row[hd] += s;
        }
        for r in 0..hd {
            if z[r] <= 0.0 {
                continue;
            }
            let back: f64 = (0..c).map(|k| self.w_output.get(k, r) * delta_out[k]).sum();
            let s = scale * back;
            let row = g.hidden.row_mut(r);
            for (gv, &xv) in row[..d].iter_mut().zip(x) {
                *gv += s * xv;
            }
            row[d] += s;
        }
        loss
    }

    /// One stochastic gradient step on a single sample using the current rates.
    /// Returns the sample's loss before the update.
    pub fn backprop_step(&mut self, x: &[f64], y: ClassLabel) -> Result<f64> {
        self.check_dim(x)?;
        self.check_label(y)?;
        let loss = self.step_unchecked(x, y);
        if !loss.is_finite() || !self.is_finite() {
            return Err(Error::Diverged { epoch: 0 });
        }
        Ok(loss)
    }

    /// Fused forward/backward/update without allocation beyond two small vectors.
    fn step_unchecked(&mut self, x: &[f64], y: ClassLabel) -> f64 {
        let (d, hd, c) = (
            self.config.input_dim,
            self.config.hidden,
            self.config.classes,
        );
        let z = self.hidden_preactivations(x);
        let h: Vec<f64> = z.iter().map(|&v| relu(v)).collect();
        let p = Posterior::softmax(&self.logits(&h));
        let loss = -p.probs()[y.0].ln();
        let mut delta_out = p.0;
        delta_out[y.0] -= 1.0;

        // Hidden deltas use the output weights from before this step's update.
        let delta_hidden: Vec<f64> = (0..hd)
            .map(|r| {
                if z[r] > 0.0 {
                    (0..c).map(|k| self.w_output.get(k, r) * delta_out[k]).sum()
                } else {
                    0.0
                }
            })
            .collect();

        let (eta_h, eta_o) = (self.rates.hidden, self.rates.output);
        for k in 0..c {
            let s = eta_o * delta_out[k];
            let row = self.w_output.row_mut(k);
            for (w, &hv) in row[..hd].iter_mut().zip(&h) {
                *w -= s * hv;
            }
            row[hd] -= s;
        }
        for (r, &dh) in delta_hidden.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            let s = eta_h * dh;
            let row = self.w_hidden.row_mut(r);
            for (w, &xv) in row[..d].iter_mut().zip(x) {
                *w -= s * xv;
            }
            row[d] -= s;
        }
        loss
    }

    /// Per-sample SGD over `labeled` until the epoch budget or loss threshold.
    ///
    /// Rates are reset from `N = labeled.len()` first. On divergence the model
    /// is left in its partially trained state and should be discarded.
    pub fn train(&mut self, labeled: &Dataset) -> Result<TrainTrace> {
        self.config.validate()?;
        if labeled.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labeled.dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: labeled.dim(),
            });
        }
        let labels = labeled.require_labels()?;
        if let Some(&y) = labels.iter().find(|l| l.0 >= self.config.classes) {
            self.check_label(y)?;
        }

        let n = labeled.len();
        self.rates = self.config.rates_for(n);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_from_seed(derive_seed(self.config.seed, stream::SHUFFLE, 0));
        let mut losses = Vec::with_capacity(self.config.epochs.min(1 << 16));
        let mut stop = StopReason::EpochBudget;

        for epoch in 0..self.config.epochs {
            if self.config.shuffle {
                order.shuffle(&mut rng);
            }
            let mut total = 0.0;
            for &i in &order {
                total += self.step_unchecked(labeled.features(i), labels[i]);
            }
            let mean = total / n as f64;
            if !mean.is_finite() || !self.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            losses.push(mean);
            if mean < self.config.loss_threshold {
                stop = StopReason::LossThreshold;
                break;
            }
        }
        Ok(TrainTrace {
            epochs_run: losses.len(),
            losses,
            stop,
        })
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn accuracy(&self, labeled: &Dataset) -> Result<f64> {
        if labeled.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let labels = labeled.require_labels()?;
        let posts = self.predict_proba_all(labeled)?;
        let correct = posts
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p.argmax() == **l)
            .count();
        Ok(correct as f64 / labeled.len() as f64)
    }

    /// Analytic gradient of the mean batch loss.
    pub fn batch_gradients(&self, batch: &[(Vec<f64>, ClassLabel)]) -> Result<Gradients> {
        let mut g = Gradients {
            hidden: Matrix::zeros(self.w_hidden.rows, self.w_hidden.cols),
            output: Matrix::zeros(self.w_output.rows, self.w_output.cols),
        };
        let scale = 1.0 / batch.len().max(1) as f64;
        for (x, y) in batch {
            self.check_dim(x)?;
            self.check_label(*y)?;
            self.accumulate(x, *y, scale, &mut g);
        }
        Ok(g)
    }

    /// Smallest |pre-activation| of any hidden unit over the batch.
    pub fn min_kink_distance(&self, batch: &[(Vec<f64>, ClassLabel)]) -> f64 {
        batch
            .iter()
            .flat_map(|(x, _)| self.hidden_preactivations(x))
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn num_weights(&self) -> usize {
        self.w_hidden.data.len() + self.w_output.data.len()
    }

    /// Flat view over hidden weights followed by output weights.
    pub fn weight_mut(&mut self, idx: usize) -> &mut f64 {
        let n = self.w_hidden.data.len();
        if idx < n {
            &mut self.w_hidden.data[idx]
        } else {
            &mut self.w_output.data[idx - n]
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MlpModel = serde_json::from_str(s)?;
        m.config.validate()?;
        let (d, h, c) = (m.config.input_dim, m.config.hidden, m.config.classes);
        let shape_ok = m.w_hidden.rows == h
            && m.w_hidden.cols == d + 1
            && m.w_hidden.data.len() == h * (d + 1)
            && m.w_output.rows == c
            && m.w_output.cols == h + 1
            && m.w_output.data.len() == c * (h + 1);
        if !shape_ok {
            return Err(Error::InvalidConfig(
                "weight shapes disagree with config".into(),
            ));
        }
        Ok(m)
    }
}

/// Denominator floor for relative gradient error; below it errors are absolute.
pub const GRAD_CHECK_FLOOR: f64 = 1e-2;

/// Largest relative error between analytic and central-difference gradients
/// of the mean batch loss, over every weight.
///
/// Relative error is `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn grad_check(model: &MlpModel, batch: &[(Vec<f64>, ClassLabel)], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig("eps must be positive".into()));
    }
    let analytic = model.batch_gradients(batch)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;

    let n_hidden = probe.w_hidden.data.len();
    for idx in 0..probe.num_weights() {
        let orig = *probe.weight_mut(idx);
        *probe.weight_mut(idx) = orig + eps;
        let up = probe.mean_loss(batch)?;
        *probe.weight_mut(idx) = orig - eps;
        let down = probe.mean_loss(batch)?;
        *probe.weight_mut(idx) = orig;

        let numeric = (up - down) / (2.0 * eps);
        let a = if idx < n_hidden {
            analytic.hidden.data[idx]
        } else {
            analytic.output.data[idx - n_hidden]
        };
        let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
