//! Feedforward networks with hand-written backpropagation: undercomplete
//! (optionally denoising) autoencoders, deep-feature extraction, a binary
//! classifier, confusion matrices and permutation importance.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{derive_seed, split, standardize, DataMatrix, RngStream, SplitSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
    Logistic,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l+1]` outputs via
/// `f_l(a·W_l + b_l)`, with `W_l` stored input×output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activations: Vec<Activation>,
}

impl MlpParams {
    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>, activations: Vec<Activation>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() || weights.len() != activations.len() {
            return Err(Error::InvalidArgument("need one weight, bias and activation per layer".into()));
        }
        let mut layer_sizes = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != *layer_sizes.last().expect("nonempty") || b.len() != w.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: *layer_sizes.last().expect("nonempty"),
                    got: w.nrows(),
                });
            }
            layer_sizes.push(w.ncols());
        }
        let params = Self {
            layer_sizes,
            weights,
            biases,
            activations,
        };
        if !params.is_finite() {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(params)
    }

    /// Glorot-uniform weights, zero biases. `hidden` applies to every layer
    /// but the last, which uses `output`.
    pub fn random(layer_sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = RngStream::new(seed);
        let n_layers = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut activations = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)));
            biases.push(Array1::zeros(fan_out));
            activations.push(if l + 1 == n_layers { output } else { hidden });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activations,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// Activations of every layer; index 0 is the input itself.
pub fn forward(params: &MlpParams, batch: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    if batch.ncols() != params.input_size() {
        return Err(Error::DimensionMismatch {
            expected: params.input_size(),
            got: batch.ncols(),
        });
    }
    let mut acts = Vec::with_capacity(params.n_layers() + 1);
    acts.push(batch.to_owned());
    for l in 0..params.n_layers() {
        let f = params.activations[l];
        let mut z = acts[l].dot(&params.weights[l]) + &params.biases[l];
        z.mapv_inplace(|v| f.apply(v));
        acts.push(z);
    }
    Ok(acts)
}

/// Network output only.
pub fn predict(params: &MlpParams, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(forward(params, batch)?.pop().expect("at least the input"))
}

/// Mean over cells of the squared difference.
pub fn reconstruction_loss(output: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    if output.is_empty() {
        return 0.0;
    }
    let sum: f64 = Zip::from(&output).and(&target).fold(0.0, |acc, o, t| acc + (o - t) * (o - t));
    sum / output.len() as f64
}

const BCE_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy of probabilities against 0/1 targets.
pub fn binary_cross_entropy(prob: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    if prob.is_empty() {
        return 0.0;
    }
    let sum: f64 = Zip::from(&prob).and(&target).fold(0.0, |acc, p, y| {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        acc - (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    });
    sum / prob.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
    /// Requires a logistic output layer.
    BinaryCrossEntropy,
}

impl Loss {
    pub fn eval(self, output: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
        match self {
            Loss::Mse => reconstruction_loss(output, target),
            Loss::BinaryCrossEntropy => binary_cross_entropy(output, target),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact gradients of the mean squared reconstruction loss.
pub fn backprop_grads(params: &MlpParams, batch: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Gradients> {
    backprop_with_loss(params, batch, target, Loss::Mse)
}

pub fn backprop_with_loss(params: &MlpParams, batch: ArrayView2<f64>, target: ArrayView2<f64>, loss: Loss) -> Result<Gradients> {
    let acts = forward(params, batch)?;
    let out = acts.last().expect("output layer");
    if out.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: out.ncols(),
            got: target.ncols(),
        });
    }
    let last = params.n_layers() - 1;
    let mut delta = match loss {
        Loss::Mse => {
            let scale = 2.0 / out.len() as f64;
            let f = params.activations[last];
            let mut d = (out - &target) * scale;
            Zip::from(&mut d).and(out).for_each(|d, &a| *d *= f.derivative(a));
            d
        }
        Loss::BinaryCrossEntropy => {
            if params.activations[last] != Activation::Logistic {
                return Err(Error::InvalidArgument("cross-entropy needs a logistic output".into()));
            }
            // logistic and cross-entropy derivatives cancel to p − y
            (out - &target) / out.len() as f64
        }
    };

    let mut gw = vec![Array2::zeros((0, 0)); params.n_layers()];
    let mut gb = vec![Array1::zeros(0); params.n_layers()];
    for l in (0..params.n_layers()).rev() {
        gw[l] = acts[l].t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let f = params.activations[l - 1];
            let mut prev = delta.dot(&params.weights[l].t());
            Zip::from(&mut prev).and(&acts[l]).for_each(|d, &a| *d *= f.derivative(a));
            delta = prev;
        }
    }
    Ok(Gradients { weights: gw, biases: gb })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    Sgd,
    #[default]
    Momentum,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "momentum" => Ok(Optimizer::Momentum),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

pub const MOMENTUM: f64 = 0.9;

/// Mini-batch descent settings shared by the autoencoder and the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl TrainSettings {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Standard deviation of input noise; 0 trains a plain autoencoder.
    pub denoise_sd: f64,
    pub activation: Activation,
    pub overcomplete_ok: bool,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![16],
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: Optimizer::Momentum,
            denoise_sd: 0.0,
            activation: Activation::Tanh,
            overcomplete_ok: false,
            seed: 0,
        }
    }
}

impl AeConfig {
    /// Checks the settings against `p` input features.
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("hidden_sizes must be nonempty and positive".into()));
        }
        if !self.overcomplete_ok {
            if let Some(h) = self.hidden_sizes.iter().find(|&&h| h >= p) {
                return Err(Error::InvalidArgument(format!(
                    "hidden size {h} is not below the input width {p}; set overcomplete_ok to allow it"
                )));
            }
        }
        if !(self.denoise_sd >= 0.0 && self.denoise_sd.is_finite()) {
            return Err(Error::InvalidArgument("denoise_sd must be >= 0".into()));
        }
        self.settings().validate()
    }

    fn settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
        }
    }

    pub fn layer_sizes(&self, p: usize) -> Vec<usize> {
        let mut sizes = vec![p];
        sizes.extend(&self.hidden_sizes);
        sizes.push(p);
        sizes
    }
}

/// Loss curves; entry 0 is measured before the first update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Empty when no holdout set was given.
    pub holdout_loss: Vec<f64>,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "holdout_loss"])?;
        for (e, t) in self.train_loss.iter().enumerate() {
            let h = self.holdout_loss.get(e).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([e.to_string(), t.to_string(), h])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rows_of(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Mini-batch descent over shuffled rows. `noise` perturbs each batch input
/// while targets stay as given.
fn descend(
    params: &mut MlpParams,
    x: ArrayView2<f64>,
    target: ArrayView2<f64>,
    loss: Loss,
    settings: &TrainSettings,
    noise_sd: f64,
    mut on_epoch: impl FnMut(&MlpParams) -> Result<()>,
) -> Result<()> {
    let n = x.nrows();
    let mut rng = RngStream::new(settings.seed);
    let mut vel_w: Vec<Array2<f64>> = params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut vel_b: Vec<Array1<f64>> = params.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
    let mu = match settings.optimizer {
        Optimizer::Sgd => 0.0,
        Optimizer::Momentum => MOMENTUM,
    };
    let lr = settings.learning_rate;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let mut xb = rows_of(x, chunk);
            if noise_sd > 0.0 {
                xb.mapv_inplace(|v| v + noise_sd * rng.normal());
            }
            let tb = rows_of(target, chunk);
            let g = backprop_with_loss(params, xb.view(), tb.view(), loss)?;
            for l in 0..params.n_layers() {
                vel_w[l] *= mu;
                vel_w[l].scaled_add(-lr, &g.weights[l]);
                params.weights[l] += &vel_w[l];
                vel_b[l] *= mu;
                vel_b[l].scaled_add(-lr, &g.biases[l]);
                params.biases[l] += &vel_b[l];
            }
        }
        if !params.is_finite() {
            return Err(Error::NumericalDivergence("network parameters became non-finite".into()));
        }
        on_epoch(params)?;
    }
    Ok(())
}

fn checked_loss(params: &MlpParams, x: ArrayView2<f64>, target: ArrayView2<f64>, loss: Loss) -> Result<f64> {
    let out = predict(params, x)?;
    let v = loss.eval(out.view(), target);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalDivergence("loss became non-finite".into()))
    }
}

/// Trains `p → hidden… → p` with identity output to reconstruct `data`.
/// Hidden layers all use `cfg.activation`.
pub fn train_autoencoder(
    data: ArrayView2<f64>,
    holdout: Option<ArrayView2<f64>>,
    cfg: &AeConfig,
) -> Result<(MlpParams, TrainReport)> {
    let (n, p) = data.dim();
    cfg.validate(p)?;
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingData);
    }
    if let Some(h) = holdout {
        if h.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: h.ncols(),
            });
        }
    }
    let mut params = MlpParams::random(&cfg.layer_sizes(p), cfg.activation, Activation::Identity, derive_seed(cfg.seed, 0))?;
    let mut report = TrainReport {
        train_loss: vec![checked_loss(&params, data, data, Loss::Mse)?],
        holdout_loss: Vec::new(),
    };
    if let Some(h) = holdout {
        report.holdout_loss.push(checked_loss(&params, h, h, Loss::Mse)?);
    }
    let mut settings = cfg.settings();
    settings.seed = derive_seed(cfg.seed, 1);
    descend(&mut params, data, data, Loss::Mse, &settings, cfg.denoise_sd, |p| {
        report.train_loss.push(checked_loss(p, data, data, Loss::Mse)?);
        if let Some(h) = holdout {
            report.holdout_loss.push(checked_loss(p, h, h, Loss::Mse)?);
        }
        Ok(())
    })?;
    Ok((params, report))
}

/// Activations of hidden layer `layer` (1-based), columns `DF.L{layer}.C{k}`.
pub fn deep_features(params: &MlpParams, data: ArrayView2<f64>, layer: usize) -> Result<DataMatrix> {
    if layer == 0 || layer >= params.n_layers() {
        return Err(Error::BadLayer(layer));
    }
    let mut acts = forward(params, data)?;
    let features = acts.swap_remove(layer);
    let names = (1..=features.ncols()).map(|k| format!("DF.L{layer}.C{k}")).collect();
    DataMatrix::new(features, names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![8, 8],
            activation: Activation::Tanh,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: Optimizer::Momentum,
            seed: 0,
        }
    }
}

fn label_column(labels: &[u32]) -> Result<Array2<f64>> {
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("labels must be 0 or 1, found {bad}")));
    }
    Ok(Array2::from_shape_fn((labels.len(), 1), |(i, _)| labels[i] as f64))
}

/// Binary classifier with logistic output trained on cross-entropy.
pub fn train_classifier(features: ArrayView2<f64>, labels: &[u32], cfg: &ClassifierConfig) -> Result<MlpParams> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingData);
    }
    let y = label_column(labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClassData);
    }
    let settings = TrainSettings {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        optimizer: cfg.optimizer,
        seed: derive_seed(cfg.seed, 1),
    };
    settings.validate()?;
    let mut sizes = vec![features.ncols()];
    sizes.extend(&cfg.hidden_sizes);
    sizes.push(1);
    let mut params = MlpParams::random(&sizes, cfg.activation, Activation::Logistic, derive_seed(cfg.seed, 0))?;
    descend(&mut params, features, y.view(), Loss::BinaryCrossEntropy, &settings, 0.0, |p| {
        checked_loss(p, features, y.view(), Loss::BinaryCrossEntropy).map(|_| ())
    })?;
    Ok(params)
}

/// Class 1 when the predicted probability is at least 0.5.
pub fn classify(params: &MlpParams, features: ArrayView2<f64>) -> Result<Vec<u32>> {
    let prob = predict(params, features)?;
    Ok(prob.column(0).iter().map(|&p| u32::from(p >= 0.5)).collect())
}

pub fn accuracy(pred: &[u32], truth: &[u32]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// Predicted classes as rows, observed classes as columns, positive class
/// (label 1) first on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            (self.counts[0][0] + self.counts[1][1]) as f64 / t as f64
        }
    }

    /// Each predicted row as percentages of its total.
    pub fn row_percentages(&self) -> [[f64; 2]; 2] {
        self.counts.map(|row| {
            let s = (row[0] + row[1]) as f64;
            if s == 0.0 {
                [0.0, 0.0]
            } else {
                [100.0 * row[0] as f64 / s, 100.0 * row[1] as f64 / s]
            }
        })
    }

    pub fn write_csv<W: Write>(&self, positive: &str, negative: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["predicted", positive, negative, "row_pct_positive", "row_pct_negative"])?;
        let pct = self.row_percentages();
        for (r, name) in [positive, negative].iter().enumerate() {
            w.write_record([
                format!("{name}'"),
                self.counts[r][0].to_string(),
                self.counts[r][1].to_string(),
                format!("{:.2}", pct[r][0]),
                format!("{:.2}", pct[r][1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix(pred: &[u32], truth: &[u32]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let slot = |l: u32| -> Result<usize> {
        match l {
            1 => Ok(0),
            0 => Ok(1),
            other => Err(Error::InvalidArgument(format!("labels must be 0 or 1, found {other}"))),
        }
    };
    let mut counts = [[0; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[slot(p)?][slot(t)?] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Importance {
    pub feature: String,
    /// Mean accuracy drop when the column is permuted.
    pub raw_drop: f64,
    /// Share of the summed positive drops.
    pub relative: f64,
}

pub fn write_importance_csv<W: Write>(rows: &[Importance], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "raw", "relative"])?;
    for r in rows {
        w.write_record([r.feature.clone(), r.raw_drop.to_string(), r.relative.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn permutation_importance(
    classifier: &MlpParams,
    features: &DataMatrix,
    labels: &[u32],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>> {
    let x = features.complete_values()?;
    if labels.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: labels.len(),
        });
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    let base = accuracy(&classify(classifier, x)?, labels);
    let mut rng = RngStream::new(seed);
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    let mut drops = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut total = 0.0;
        for _ in 0..repeats {
            perm.shuffle(&mut rng);
            let mut shuffled = x.to_owned();
            for (i, &src) in perm.iter().enumerate() {
                shuffled[[i, j]] = x[[src, j]];
            }
            total += base - accuracy(&classify(classifier, shuffled.view())?, labels);
        }
        drops.push(total / repeats as f64);
    }
    let positive: f64 = drops.iter().map(|d| d.max(0.0)).sum();
    Ok(features
        .feature_names()
        .iter()
        .zip(&drops)
        .map(|(name, &d)| Importance {
            feature: name.clone(),
            raw_drop: d,
            relative: if positive > 0.0 { d.max(0.0) / positive } else { 0.0 },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub autoencoder: AeConfig,
    pub classifier: ClassifierConfig,
    /// Hidden layer whose activations feed the classifier.
    pub feature_layer: usize,
    pub importance_repeats: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            autoencoder: AeConfig::default(),
            classifier: ClassifierConfig::default(),
            feature_layer: 1,
            importance_repeats: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub autoencoder: MlpParams,
    pub ae_report: TrainReport,
    pub classifier: MlpParams,
    pub confusion: ConfusionMatrix,
    pub test_accuracy: f64,
    pub importance: Vec<Importance>,
    /// Deep features of every input row, in input order.
    pub features: DataMatrix,
}

/// 60/20/20 split; the autoencoder trains on the training part with the
/// validation part as holdout, its deep features train the classifier, and
/// the test part is scored. Standardization uses training statistics.
pub fn classification_pipeline(data: &DataMatrix, labels: &[u32], cfg: &PipelineConfig) -> Result<PipelineResult> {
    if labels.len() != data.n_rows() {
        return Err(Error::LengthMismatch {
            left: data.n_rows(),
            right: labels.len(),
        });
    }
    data.complete_values()?;
    let parts = split(data, &SplitSpec::new(0.6, 0.2, 0.2, derive_seed(cfg.seed, 10))?)?;
    let (_, centers, scales) = standardize(&parts.train.data)?;
    let scale = |m: &DataMatrix| (&m.values() - &centers) / &scales;
    let all = scale(data);
    let train = scale(&parts.train.data);
    let validation = scale(&parts.validation.data);

    let mut ae_cfg = cfg.autoencoder.clone();
    ae_cfg.seed = derive_seed(cfg.seed, 11);
    let (ae, ae_report) = train_autoencoder(train.view(), Some(validation.view()), &ae_cfg)?;
    let features = deep_features(&ae, all.view(), cfg.feature_layer)?;

    let pick = |rows: &[usize]| -> (DataMatrix, Vec<u32>) { (features.select_rows(rows), rows.iter().map(|&r| labels[r]).collect()) };
    let (train_f, train_y) = pick(&parts.train.rows);
    let (test_f, test_y) = pick(&parts.test.rows);

    let mut clf_cfg = cfg.classifier.clone();
    clf_cfg.seed = derive_seed(cfg.seed, 12);
    let classifier = train_classifier(train_f.values(), &train_y, &clf_cfg)?;
    let pred = classify(&classifier, test_f.values())?;
    let confusion = confusion_matrix(&pred, &test_y)?;
    let importance = permutation_importance(&classifier, &test_f, &test_y, cfg.importance_repeats, derive_seed(cfg.seed, 13))?;
    Ok(PipelineResult {
        autoencoder: ae,
        ae_report,
        classifier,
        test_accuracy: confusion.accuracy(),
        confusion,
        importance,
        features,
    })
}
