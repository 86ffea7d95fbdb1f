//! Two-head dense network: shared extractor F, linear Softmax head C and a
//! four-width MLP EDL head D ending in softplus evidence.
//!
//! All parameters live in one flat vector; each [`Dense`] layer records its
//! offset into it. Weights are stored row-major as `out_dim × in_dim`,
//! followed by `out_dim` biases.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::ConcentrationVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub input_dim: usize,
    /// Widths of the extractor layers; the last entry is the feature dimension.
    pub extractor: Vec<usize>,
    /// Hidden widths of the EDL head between the features and the K outputs.
    pub edl_hidden: Vec<usize>,
    pub num_classes: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self { input_dim, extractor: vec![32, 16], edl_hidden: vec![32, 32], num_classes }
    }

    pub fn feature_dim(&self) -> usize {
        *self.extractor.last().unwrap_or(&self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("network.input_dim must be > 0".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("network needs at least 2 classes".into()));
        }
        if self.extractor.is_empty() || self.extractor.iter().chain(&self.edl_hidden).any(|&w| w == 0) {
            return Err(Error::Config("network widths must be non-empty and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    in_dim: usize,
    out_dim: usize,
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.out_dim * self.in_dim
    }

    fn apply(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &params[self.offset..self.bias_offset()];
        let b = &params[self.bias_offset()..self.offset + self.len()];
        for (row, bias) in w.chunks_exact(self.in_dim).zip(b) {
            out.push(bias + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients and returns ∂/∂input.
    fn backprop(&self, params: &[f64], input: &[f64], grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        let bias = self.bias_offset();
        for (o, &go) in grad_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let row = self.offset + o * self.in_dim;
            for i in 0..self.in_dim {
                grads[row + i] += go * input[i];
                grad_in[i] += go * params[row + i];
            }
            grads[bias + o] += go;
        }
        grad_in
    }
}

/// ln(1 + eᶻ) computed without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHeadModel {
    shape: NetworkShape,
    extractor: Vec<Dense>,
    softmax_head: Dense,
    edl_head: Vec<Dense>,
    params: Vec<f64>,
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Clone)]
struct SampleCache {
    /// Input followed by each tanh extractor activation; the last is the feature.
    extractor: Vec<Vec<f64>>,
    /// Tanh activations of the EDL hidden layers.
    edl: Vec<Vec<f64>>,
    /// Pre-softplus EDL outputs.
    edl_logits: Vec<f64>,
}

/// Outputs of a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<Vec<f64>>,
    pub alpha: Vec<ConcentrationVector>,
    pub features: Vec<Vec<f64>>,
    caches: Vec<SampleCache>,
}

impl TwoHeadModel {
    fn layout(shape: &NetworkShape) -> (Vec<Dense>, Dense, Vec<Dense>, usize) {
        let mut offset = 0;
        let mut make = |in_dim, out_dim| {
            let d = Dense { in_dim, out_dim, offset };
            offset += d.len();
            d
        };
        let mut extractor = Vec::new();
        let mut prev = shape.input_dim;
        for &w in &shape.extractor {
            extractor.push(make(prev, w));
            prev = w;
        }
        let feature = prev;
        let softmax_head = make(feature, shape.num_classes);
        let mut edl_head = Vec::new();
        for &w in &shape.edl_hidden {
            edl_head.push(make(prev, w));
            prev = w;
        }
        edl_head.push(make(prev, shape.num_classes));
        (extractor, softmax_head, edl_head, offset)
    }

    /// Fan-in uniform initialization U(−1/√fan_in, 1/√fan_in) for weights and biases.
    pub fn new(shape: NetworkShape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(shape)?;
        let layers: Vec<Dense> = model.layers().collect();
        for layer in layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for p in &mut model.params[layer.offset..layer.offset + layer.len()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(shape: NetworkShape) -> Result<Self> {
        shape.validate()?;
        let (extractor, softmax_head, edl_head, n) = Self::layout(&shape);
        Ok(Self { shape, extractor, softmax_head, edl_head, params: vec![0.0; n] })
    }

    pub fn from_params(shape: NetworkShape, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch { expected: model.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        model.params = params;
        Ok(model)
    }

    fn layers(&self) -> impl Iterator<Item = Dense> + '_ {
        self.extractor.iter().chain(std::iter::once(&self.softmax_head)).chain(&self.edl_head).copied()
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn forward_one(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, SampleCache) {
        let p = &self.params;
        let mut extractor = Vec::with_capacity(self.extractor.len() + 1);
        extractor.push(x.to_vec());
        let mut buf = Vec::new();
        for layer in &self.extractor {
            layer.apply(p, extractor.last().unwrap(), &mut buf);
            extractor.push(buf.iter().map(|z| z.tanh()).collect());
        }
        let feature = extractor.last().unwrap();

        let mut logits = Vec::new();
        self.softmax_head.apply(p, feature, &mut logits);

        let (last, hidden) = self.edl_head.split_last().unwrap();
        let mut edl: Vec<Vec<f64>> = Vec::with_capacity(hidden.len());
        for layer in hidden {
            layer.apply(p, edl.last().unwrap_or(feature), &mut buf);
            edl.push(buf.iter().map(|z| z.tanh()).collect());
        }
        let mut edl_logits = Vec::new();
        last.apply(p, edl.last().unwrap_or(feature), &mut edl_logits);
        let alpha = edl_logits.iter().map(|&z| softplus(z) + 1.0).collect();
        (logits, alpha, SampleCache { extractor, edl, edl_logits })
    }

    /// Runs both heads on every input, preserving order.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<ForwardPass> {
        let n = xs.len();
        let mut pass = ForwardPass {
            logits: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
            features: Vec::with_capacity(n),
            caches: Vec::with_capacity(n),
        };
        for x in xs {
            if x.len() != self.shape.input_dim {
                return Err(Error::DimensionMismatch { expected: self.shape.input_dim, got: x.len() });
            }
            let (logits, alpha, cache) = self.forward_one(x);
            pass.logits.push(logits);
            pass.alpha.push(ConcentrationVector::new(alpha)?);
            pass.features.push(cache.extractor.last().unwrap().clone());
            pass.caches.push(cache);
        }
        Ok(pass)
    }

    /// Parameter gradient of Σ_i ⟨grad_logits_i, logits_i⟩ + ⟨grad_alpha_i, α_i⟩.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &[Vec<f64>], grad_alpha: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = pass.caches.len();
        if grad_logits.len() != n || grad_alpha.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: grad_logits.len().min(grad_alpha.len()) });
        }
        let k = self.shape.num_classes;
        let mut grads = vec![0.0; self.params.len()];
        let p = &self.params;
        for ((cache, gl), ga) in pass.caches.iter().zip(grad_logits).zip(grad_alpha) {
            if gl.len() != k || ga.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: gl.len().min(ga.len()) });
            }
            if gl.iter().chain(ga).any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("upstream gradient logits={gl:?} alpha={ga:?}")));
            }
            let feature = cache.extractor.last().unwrap();

            let mut grad_feature = self.softmax_head.backprop(p, feature, gl, &mut grads);

            // α = softplus(z) + 1, dα/dz = sigmoid(z)
            let mut g: Vec<f64> = ga.iter().zip(&cache.edl_logits).map(|(g, &z)| g * sigmoid(z)).collect();
            for (idx, layer) in self.edl_head.iter().enumerate().rev() {
                let input = if idx == 0 { feature } else { &cache.edl[idx - 1] };
                let grad_in = layer.backprop(p, input, &g, &mut grads);
                if idx == 0 {
                    for (a, b) in grad_feature.iter_mut().zip(grad_in) {
                        *a += b;
                    }
                } else {
                    g = grad_in.iter().zip(input).map(|(g, h)| g * (1.0 - h * h)).collect();
                }
            }

            for (idx, layer) in self.extractor.iter().enumerate().rev() {
                let out = &cache.extractor[idx + 1];
                let g: Vec<f64> = grad_feature.iter().zip(out).map(|(g, h)| g * (1.0 - h * h)).collect();
                grad_feature = layer.backprop(p, &cache.extractor[idx], &g, &mut grads);
            }
        }
        Ok(grads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// lr(t) = lr₀ · cos(cosine_factor · π t / T)
    pub cosine_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.003, momentum: 0.9, weight_decay: 1e-4, cosine_factor: 7.0 / 16.0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("optimizer.learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("optimizer.momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("optimizer.weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(0.0..=0.5).contains(&self.cosine_factor) {
            return Err(Error::Config(format!("optimizer.cosine_factor must lie in [0, 0.5], got {}", self.cosine_factor)));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum, coupled weight decay and cosine decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    pub total_steps: u64,
    pub momentum_buffer: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, total_steps: u64, num_params: usize) -> Self {
        Self { config, step_count: 0, total_steps: total_steps.max(1), momentum_buffer: vec![0.0; num_params] }
    }

    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let t = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.config.learning_rate * (self.config.cosine_factor * std::f64::consts::PI * t).cos()
    }

    pub fn current_learning_rate(&self) -> f64 {
        self.learning_rate_at(self.step_count)
    }

    /// buf ← μ·buf + (g + wd·θ); θ ← θ − lr·buf.
    pub fn step(&mut self, model: &mut TwoHeadModel, grads: &[f64]) -> Result<()> {
        if grads.len() != model.num_params() || self.momentum_buffer.len() != grads.len() {
            return Err(Error::DimensionMismatch { expected: model.num_params(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("parameter gradient {i} = {}", grads[i])));
        }
        let lr = self.current_learning_rate();
        let OptimizerConfig { momentum, weight_decay, .. } = self.config;
        for ((p, b), g) in model.params.iter_mut().zip(&mut self.momentum_buffer).zip(grads) {
            let d = g + weight_decay * *p;
            *b = momentum * *b + d;
            *p -= lr * *b;
        }
        if let Some(i) = model.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} after step {}", self.step_count)));
        }
        self.step_count += 1;
        Ok(())
    }
}

/// Backpropagates upstream head gradients through `pass` and applies one
/// optimizer step.
pub fn backward_and_step(
    model: &mut TwoHeadModel,
    pass: &ForwardPass,
    grad_logits: &[Vec<f64>],
    grad_alpha: &[Vec<f64>],
    opt: &mut OptimizerState,
) -> Result<()> {
    let grads = model.backward(pass, grad_logits, grad_alpha)?;
    opt.step(model, &grads)
}

pub const CHECKPOINT_FORMAT: &str = "anedl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream: 32-byte seed (hex), stream id and word offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal string; the word position is a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Config(format!("malformed rng state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

/// Versioned JSON dump of the model parameters, optimizer state and the
/// training RNG position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub shape: NetworkShape,
    pub params: Vec<f64>,
    pub optimizer: OptimizerState,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(model: &TwoHeadModel, optimizer: &OptimizerState, rng: &ChaCha8Rng, epoch: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            epoch,
            shape: model.shape().clone(),
            params: model.params().to_vec(),
            optimizer: optimizer.clone(),
            rng: RngState::capture(rng),
        }
    }

    pub fn model(&self) -> Result<TwoHeadModel> {
        TwoHeadModel::from_params(self.shape.clone(), self.params.clone())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let ck: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }
}
