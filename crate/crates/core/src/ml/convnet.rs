//! One-dimensional convolutional binary classifier.
//!
//! Inputs are `T x Ch` series (time-major). Convolutions run along the time
//! axis only (valid padding, stride 1), so channels mix solely through the
//! filter depth. The convolution stack feeds fully connected layers and a
//! single sigmoid output, trained with class-weighted binary cross-entropy
//! and Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::sigmoid;

pub const CONVNET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel_width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub units: usize,
    pub activation: Activation,
}

/// Layer layout of a network; the sigmoid output unit is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvArch {
    pub conv: Vec<ConvSpec>,
    pub dense: Vec<DenseSpec>,
}

impl Default for ConvArch {
    /// Two 100-filter convolutions, then 300/100/50 ReLU dense layers.
    fn default() -> Self {
        let conv = ConvSpec {
            filters: 100,
            kernel_width: 3,
            activation: Activation::Relu,
        };
        let dense = |units| DenseSpec {
            units,
            activation: Activation::Relu,
        };
        ConvArch {
            conv: vec![conv, conv],
            dense: vec![dense(300), dense(100), dense(50)],
        }
    }
}

impl ConvArch {
    /// A compact layout for small data and tests.
    pub fn small() -> Self {
        ConvArch {
            conv: vec![ConvSpec {
                filters: 8,
                kernel_width: 3,
                activation: Activation::Relu,
            }],
            dense: vec![DenseSpec {
                units: 16,
                activation: Activation::Relu,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop after this many epochs without training-loss improvement.
    pub patience: usize,
    pub seed: u64,
    /// Per-channel z-scoring from training statistics.
    pub standardize: bool,
    pub balance_classes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            seed: 0,
            standardize: true,
            balance_classes: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning_rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `n` samples of `len x channels` values, time-major within a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset3 {
    pub n: usize,
    pub len: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Dataset3 {
    pub fn new(n: usize, len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * len * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n} samples of {len}x{channels}",
                data.len()
            )));
        }
        Ok(Dataset3 {
            n,
            len,
            channels,
            data,
        })
    }

    pub fn from_samples(len: usize, channels: usize, samples: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(samples.len() * len * channels);
        for s in samples {
            if s.len() != len * channels {
                return Err(Error::ShapeMismatch(format!(
                    "sample of {} values, expected {len}x{channels}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Dataset3::new(samples.len(), len, channels, data)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.len * self.channels;
        &self.data[i * s..(i + 1) * s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub activation: Activation,
    /// Shape `[filters, kernel_width, in_channels]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub units: usize,
    pub inputs: usize,
    pub activation: Activation,
    /// Shape `[units, inputs]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-channel standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvNet1D {
    pub version: u32,
    pub input_len: usize,
    pub in_channels: usize,
    pub conv: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
    /// Single sigmoid unit.
    pub output: DenseLayer,
    pub scaler: Option<Scaler>,
    pub rng_seed: u64,
}

struct Cache {
    /// Input to each conv layer, then the flattened input to the dense stack.
    conv_in: Vec<Vec<f64>>,
    conv_z: Vec<Vec<f64>>,
    dense_in: Vec<Vec<f64>>,
    dense_z: Vec<Vec<f64>>,
    out_in: Vec<f64>,
    logit: f64,
}

/// Gradient buffers shaped like the network parameters, in `params()` order.
type Grads = Vec<Vec<f64>>;

impl ConvNet1D {
    /// Randomly initialized network (He-normal for ReLU layers, Glorot-style
    /// otherwise; zero biases).
    pub fn new(input_len: usize, in_channels: usize, arch: &ConvArch, seed: u64) -> Result<Self> {
        if input_len == 0 || in_channels == 0 {
            return Err(Error::ShapeMismatch("empty network input".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut len = input_len;
        let mut ch = in_channels;
        let mut conv = Vec::new();
        for spec in &arch.conv {
            if spec.filters == 0 || spec.kernel_width == 0 {
                return Err(Error::Config("conv layers need filters and width".into()));
            }
            if spec.kernel_width > len {
                return Err(Error::ShapeMismatch(format!(
                    "kernel width {} exceeds sequence length {len}",
                    spec.kernel_width
                )));
            }
            let fan_in = spec.kernel_width * ch;
            conv.push(ConvLayer {
                filters: spec.filters,
                kernel_width: spec.kernel_width,
                in_channels: ch,
                activation: spec.activation,
                weights: init(&mut rng, spec.filters * fan_in, fan_in, spec.activation),
                bias: vec![0.0; spec.filters],
            });
            len = len - spec.kernel_width + 1;
            ch = spec.filters;
        }
        let mut inputs = len * ch;
        let mut dense = Vec::new();
        for spec in &arch.dense {
            if spec.units == 0 {
                return Err(Error::Config("dense layers need units".into()));
            }
            dense.push(DenseLayer {
                units: spec.units,
                inputs,
                activation: spec.activation,
                weights: init(&mut rng, spec.units * inputs, inputs, spec.activation),
                bias: vec![0.0; spec.units],
            });
            inputs = spec.units;
        }
        let output = DenseLayer {
            units: 1,
            inputs,
            activation: Activation::Linear,
            weights: init(&mut rng, inputs, inputs, Activation::Linear),
            bias: vec![0.0],
        };
        Ok(ConvNet1D {
            version: CONVNET_FORMAT_VERSION,
            input_len,
            in_channels,
            conv,
            dense,
            output,
            scaler: None,
            rng_seed: seed,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.conv {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        for l in &self.dense {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out.push(&self.output.weights);
        out.push(&self.output.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.conv {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for l in &mut self.dense {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.bias);
        out
    }

    fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn scale(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaler {
            None => x.to_vec(),
            Some(s) => x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = i % self.in_channels;
                    (v - s.mean[c]) / s.std[c]
                })
                .collect(),
        }
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let mut conv_in = Vec::with_capacity(self.conv.len() + 1);
        let mut conv_z = Vec::with_capacity(self.conv.len());
        let mut a = x.to_vec();
        let mut len = self.input_len;
        for l in &self.conv {
            let span = l.kernel_width * l.in_channels;
            let out_len = len - l.kernel_width + 1;
            let mut z = vec![0.0; out_len * l.filters];
            for t in 0..out_len {
                let window = &a[t * l.in_channels..t * l.in_channels + span];
                for f in 0..l.filters {
                    z[t * l.filters + f] = l.bias[f] + dot(&l.weights[f * span..(f + 1) * span], window);
                }
            }
            let next: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
            conv_in.push(std::mem::replace(&mut a, next));
            conv_z.push(z);
            len = out_len;
        }
        let mut dense_in = Vec::with_capacity(self.dense.len());
        let mut dense_z = Vec::with_capacity(self.dense.len());
        for l in &self.dense {
            let z = dense_forward(l, &a);
            let next: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
            dense_in.push(std::mem::replace(&mut a, next));
            dense_z.push(z);
        }
        let logit = dense_forward(&self.output, &a)[0];
        Cache {
            conv_in,
            conv_z,
            dense_in,
            dense_z,
            out_in: a,
            logit,
        }
    }

    /// Accumulates `dlogit`-scaled parameter gradients into `grads`.
    fn backward(&self, cache: &Cache, dlogit: f64, grads: &mut Grads) {
        let nc = self.conv.len();
        let nd = self.dense.len();
        let out_idx = 2 * (nc + nd);
        let mut da = dense_backward(&self.output, &cache.out_in, &[dlogit], grads, out_idx);
        for (k, l) in self.dense.iter().enumerate().rev() {
            let dz: Vec<f64> = da
                .iter()
                .zip(&cache.dense_z[k])
                .map(|(d, &z)| d * l.activation.derivative(z))
                .collect();
            da = dense_backward(l, &cache.dense_in[k], &dz, grads, 2 * (nc + k));
        }
        for (k, l) in self.conv.iter().enumerate().rev() {
            let input = &cache.conv_in[k];
            let span = l.kernel_width * l.in_channels;
            let out_len = cache.conv_z[k].len() / l.filters;
            let mut din = vec![0.0; input.len()];
            let (gw, rest) = grads[2 * k..].split_at_mut(1);
            let (gw, gb) = (&mut gw[0], &mut rest[0]);
            for t in 0..out_len {
                let base = t * l.in_channels;
                for f in 0..l.filters {
                    let idx = t * l.filters + f;
                    let dz = da[idx] * l.activation.derivative(cache.conv_z[k][idx]);
                    if dz == 0.0 {
                        continue;
                    }
                    gb[f] += dz;
                    let w = &l.weights[f * span..(f + 1) * span];
                    let gwf = &mut gw[f * span..(f + 1) * span];
                    let win = &input[base..base + span];
                    for j in 0..span {
                        gwf[j] += dz * win[j];
                    }
                    let dwin = &mut din[base..base + span];
                    for j in 0..span {
                        dwin[j] += dz * w[j];
                    }
                }
            }
            da = din;
        }
    }

    /// Probability of the positive class for one raw (unscaled) sample.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_len * self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "network expects {}x{} input, got {} values",
                self.input_len,
                self.in_channels,
                x.len()
            )));
        }
        Ok(sigmoid(self.forward(&self.scale(x)).logit))
    }

    pub fn predict(&self, inputs: &Dataset3) -> Result<Vec<f64>> {
        (0..inputs.n).map(|i| self.predict_one(inputs.sample(i))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONVNET_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported convnet version {}", self.version)));
        }
        if self.input_len == 0 || self.in_channels == 0 {
            return Err(Error::Model("empty network input".into()));
        }
        let mut len = self.input_len;
        let mut ch = self.in_channels;
        for l in &self.conv {
            if l.in_channels != ch
                || l.filters == 0
                || l.kernel_width == 0
                || l.kernel_width > len
                || l.weights.len() != l.filters * l.kernel_width * ch
                || l.bias.len() != l.filters
            {
                return Err(Error::Model("conv layer shapes do not chain".into()));
            }
            len = len - l.kernel_width + 1;
            ch = l.filters;
        }
        let mut inputs = len * ch;
        for l in self.dense.iter().chain(std::iter::once(&self.output)) {
            if l.inputs != inputs
                || l.units == 0
                || l.weights.len() != l.units * inputs
                || l.bias.len() != l.units
            {
                return Err(Error::Model("dense layer shapes do not chain".into()));
            }
            inputs = l.units;
        }
        if self.output.units != 1 {
            return Err(Error::Model("output layer must have one unit".into()));
        }
        if let Some(s) = &self.scaler {
            if s.mean.len() != self.in_channels
                || s.std.len() != self.in_channels
                || s.std.iter().any(|v| !(*v > 0.0))
            {
                return Err(Error::Model("bad scaler statistics".into()));
            }
        }
        if self.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Model("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: ConvNet1D = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dense_forward(l: &DenseLayer, a: &[f64]) -> Vec<f64> {
    (0..l.units)
        .map(|u| l.bias[u] + dot(&l.weights[u * l.inputs..(u + 1) * l.inputs], a))
        .collect()
}

/// Adds the layer's weight/bias gradients at `grads[idx]`/`grads[idx + 1]`
/// and returns the gradient with respect to the layer input.
fn dense_backward(l: &DenseLayer, a: &[f64], dz: &[f64], grads: &mut Grads, idx: usize) -> Vec<f64> {
    let mut da = vec![0.0; l.inputs];
    let (gw, rest) = grads[idx..].split_at_mut(1);
    let (gw, gb) = (&mut gw[0], &mut rest[0]);
    for u in 0..l.units {
        let d = dz[u];
        if d == 0.0 {
            continue;
        }
        gb[u] += d;
        let row = &l.weights[u * l.inputs..(u + 1) * l.inputs];
        let grow = &mut gw[u * l.inputs..(u + 1) * l.inputs];
        for j in 0..l.inputs {
            grow[j] += d * a[j];
            da[j] += d * row[j];
        }
    }
    da
}

fn init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, act: Activation) -> Vec<f64> {
    let gain = if act == Activation::Relu { 2.0 } else { 1.0 };
    let normal = Normal::new(0.0, (gain / fan_in.max(1) as f64).sqrt()).expect("positive std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Binary cross-entropy from a logit, stable for large magnitudes.
fn bce(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Mean BCE over the samples (already scaled inputs) and its gradient.
fn loss_and_grad(net: &ConvNet1D, inputs: &[&[f64]], labels: &[f64], weights: &[f64]) -> (f64, Grads) {
    let mut grads = net.zero_grads();
    let wsum: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for ((x, &y), &w) in inputs.iter().zip(labels).zip(weights) {
        let cache = net.forward(x);
        loss += w * bce(cache.logit, y);
        net.backward(&cache, w * (sigmoid(cache.logit) - y) / wsum, &mut grads);
    }
    (loss / wsum, grads)
}

pub fn fit_convnet(
    inputs: &Dataset3,
    labels: &[f64],
    arch: &ConvArch,
    cfg: &TrainConfig,
) -> Result<ConvNet1D> {
    cfg.validate()?;
    if inputs.n < 2 {
        return Err(Error::InsufficientData("convnet needs at least 2 samples".into()));
    }
    if labels.len() != inputs.n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            inputs.n
        )));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Value("labels must be 0 or 1".into()));
    }
    if inputs.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite network input".into()));
    }
    let mut net = ConvNet1D::new(inputs.len, inputs.channels, arch, cfg.seed)?;
    if cfg.standardize {
        net.scaler = Some(channel_stats(inputs));
    }
    let scaled: Vec<Vec<f64>> = (0..inputs.n).map(|i| net.scale(inputs.sample(i))).collect();
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        log::warn!("convnet training set holds a single class");
    }
    let wpos = if cfg.balance_classes && pos > 0 && neg > 0 {
        neg as f64 / pos as f64
    } else {
        1.0
    };
    let weights: Vec<f64> = labels.iter().map(|&y| if y == 1.0 { wpos } else { 1.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut order: Vec<usize> = (0..inputs.n).collect();
    let mut m = net.zero_grads();
    let mut v = net.zero_grads();
    let mut step = 0i32;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_w = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| scaled[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
            let ws: Vec<f64> = batch.iter().map(|&i| weights[i]).collect();
            let (loss, grads) = loss_and_grad(&net, &xs, &ys, &ws);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            let bw: f64 = ws.iter().sum();
            epoch_loss += loss * bw;
            epoch_w += bw;
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step);
            let bc2 = 1.0 - cfg.beta2.powi(step);
            for (((p, g), m), v) in net.params_mut().into_iter().zip(&grads).zip(&mut m).zip(&mut v) {
                for j in 0..p.len() {
                    m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                    v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                    p[j] -= cfg.learning_rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.epsilon);
                }
            }
        }
        let epoch_loss = epoch_loss / epoch_w;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        if epoch_loss < best - 1e-6 {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(net)
}

fn channel_stats(inputs: &Dataset3) -> Scaler {
    let ch = inputs.channels;
    let count = (inputs.n * inputs.len) as f64;
    let mut mean = vec![0.0; ch];
    for (i, v) in inputs.data.iter().enumerate() {
        mean[i % ch] += v;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; ch];
    for (i, v) in inputs.data.iter().enumerate() {
        let d = v - mean[i % ch];
        var[i % ch] += d * d;
    }
    let std = var
        .iter()
        .map(|s| {
            let sd = (s / count).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Scaler { mean, std }
}

/// Denominator floor for relative gradient errors, so parameters whose true
/// gradient is near zero are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Worst relative disagreement between backpropagated gradients and central
/// finite differences of the mean cross-entropy over `inputs` (fed to the
/// network unscaled).
pub fn grad_check(net: &ConvNet1D, inputs: &Dataset3, labels: &[f64], eps: f64) -> Result<f64> {
    if inputs.len != net.input_len || inputs.channels != net.in_channels || labels.len() != inputs.n
    {
        return Err(Error::ShapeMismatch("grad_check input does not fit the network".into()));
    }
    let xs: Vec<&[f64]> = (0..inputs.n).map(|i| inputs.sample(i)).collect();
    let ones = vec![1.0; inputs.n];
    let (_, analytic) = loss_and_grad(net, &xs, labels, &ones);
    let mean_loss = |n: &ConvNet1D| -> f64 {
        xs.iter()
            .zip(labels)
            .map(|(x, &y)| bce(n.forward(x).logit, y))
            .sum::<f64>()
            / xs.len() as f64
    };
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (t, grad_t) in analytic.iter().enumerate() {
        for j in 0..grad_t.len() {
            let orig = probe.params()[t][j];
            probe.params_mut()[t][j] = orig + eps;
            let up = mean_loss(&probe);
            probe.params_mut()[t][j] = orig - eps;
            let down = mean_loss(&probe);
            probe.params_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad_t[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
