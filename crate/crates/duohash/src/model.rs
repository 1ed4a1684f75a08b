//! The toy differentiable embedding network: a small perceptron stack
//! (affine -> tanh -> running-stats standardization -> affine -> L2
//! normalization) with exact hand-written gradients, an SGD optimizer with
//! weight decay and momentum, and an epoch-decay learning-rate schedule
//! with a floor.
//!
//! Train mode updates the standardization layer's running statistics once
//! per forward batch (exponential moving average toward the batch moments);
//! eval mode reads them and never writes. Outputs are computed against the
//! statistics as they were at the start of the call, so gradients treat the
//! normalizer as a constant and match finite differences exactly.

use crate::error::{Error, Result};
use crate::hash::Embedding;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const STATS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Hidden layer widths; may be empty for a bare affine + normalize model.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// EMA momentum for the running statistics.
    pub stats_momentum: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>, embed_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden,
            embed_dim,
            stats_momentum: 0.1,
        }
    }
}

/// Dense layer, `weight` stored row-major with shape `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl AffineLayer {
    fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
        let normal = Normal::new(0.0, std).unwrap();
        AffineLayer {
            weight: (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for r in 0..self.out_dim {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            y[r] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        y
    }
}

/// Running mean/variance of the standardization layer, one per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub hidden_layers: Vec<AffineLayer>,
    /// Present iff there is at least one hidden layer.
    pub stats: Option<RunningStats>,
    pub output_layer: AffineLayer,
    pub mode: Mode,
    /// Optimizer step counter; caches are only valid against the step they
    /// were produced at.
    pub step: u64,
}

/// Xavier-normal initialization of all affine layers, unit running variance,
/// deterministic per seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    if config.input_dim == 0 || config.embed_dim == 0 || config.hidden.iter().any(|&h| h == 0) {
        return Err(Error::InvalidConfig(format!(
            "model dimensions must be positive: d_in={}, hidden={:?}, l={}",
            config.input_dim, config.hidden, config.embed_dim
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut hidden_layers = Vec::with_capacity(config.hidden.len());
    let mut in_dim = config.input_dim;
    for &h in &config.hidden {
        hidden_layers.push(AffineLayer::xavier(in_dim, h, &mut rng));
        in_dim = h;
    }
    let output_layer = AffineLayer::xavier(in_dim, config.embed_dim, &mut rng);
    let stats = if config.hidden.is_empty() {
        None
    } else {
        Some(RunningStats {
            mean: vec![0.0; in_dim],
            var: vec![1.0; in_dim],
        })
    };
    Ok(ModelParams {
        config: config.clone(),
        hidden_layers,
        stats,
        output_layer,
        mode: Mode::Train,
        step: 0,
    })
}

impl ModelParams {
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Total number of scalar parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.hidden_layers
            .iter()
            .chain(std::iter::once(&self.output_layer))
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut i = index;
        for (k, layer) in self.hidden_layers.iter().enumerate() {
            if i < layer.weight.len() {
                return (k, true, i);
            }
            i -= layer.weight.len();
            if i < layer.bias.len() {
                return (k, false, i);
            }
            i -= layer.bias.len();
        }
        let out = self.hidden_layers.len();
        if i < self.output_layer.weight.len() {
            return (out, true, i);
        }
        i -= self.output_layer.weight.len();
        assert!(i < self.output_layer.bias.len(), "parameter index out of range");
        (out, false, i)
    }

    /// Linear parameter access in layer order (weights then bias per layer);
    /// used by finite-difference checks and introspection.
    pub fn get_param(&self, index: usize) -> f64 {
        let (layer, is_weight, i) = self.locate(index);
        let l = if layer == self.hidden_layers.len() {
            &self.output_layer
        } else {
            &self.hidden_layers[layer]
        };
        if is_weight {
            l.weight[i]
        } else {
            l.bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, is_weight, i) = self.locate(index);
        let l = if layer == self.hidden_layers.len() {
            &mut self.output_layer
        } else {
            &mut self.hidden_layers[layer]
        };
        if is_weight {
            l.weight[i] = value;
        } else {
            l.bias[i] = value;
        }
    }
}

/// Per-sample intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct SampleCache {
    /// Activations entering each affine layer: h_0 = x, then post-tanh.
    inputs: Vec<Vec<f64>>,
    /// Post-tanh values per hidden layer (for the tanh derivative).
    tanh_out: Vec<Vec<f64>>,
    /// Standardized activations fed to the output layer.
    standardized: Vec<f64>,
    /// Norm of the output-layer result before normalization.
    raw_norm: f64,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchCache {
    samples: Vec<SampleCache>,
    /// Per-feature standardization scale used in this pass; the backward
    /// must see the scale the forward saw even after the stats move on.
    std_scale: Option<Vec<f64>>,
    step: u64,
}

impl BatchCache {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Standardized activations entering the output layer, per sample.
    pub fn penultimate(&self, i: usize) -> &[f64] {
        &self.samples[i].standardized
    }
}

/// Standardization vectors captured before any stat update in this pass.
fn standardizer(params: &ModelParams) -> Option<(Vec<f64>, Vec<f64>)> {
    params.stats.as_ref().map(|s| {
        let scale: Vec<f64> = s.var.iter().map(|v| 1.0 / (v + STATS_EPS).sqrt()).collect();
        (s.mean.clone(), scale)
    })
}

fn forward_sample(
    params: &ModelParams,
    x: &[f64],
    std: Option<&(Vec<f64>, Vec<f64>)>,
) -> Result<SampleCache> {
    if x.len() != params.config.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.config.input_dim,
            got: x.len(),
        });
    }
    let mut inputs = vec![x.to_vec()];
    let mut tanh_out = Vec::with_capacity(params.hidden_layers.len());
    let mut h = x.to_vec();
    for layer in &params.hidden_layers {
        let a = layer.apply(&h);
        h = a.iter().map(|v| v.tanh()).collect();
        tanh_out.push(h.clone());
        inputs.push(h.clone());
    }
    let standardized = match std {
        Some((mean, scale)) => h
            .iter()
            .zip(mean.iter().zip(scale))
            .map(|(v, (m, s))| (v - m) * s)
            .collect(),
        None => h.clone(),
    };
    let raw = params.output_layer.apply(&standardized);
    let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if raw_norm == 0.0 {
        return Err(Error::ZeroNorm("embedding collapsed to zero before normalization"));
    }
    let embedding = raw.iter().map(|v| v / raw_norm).collect();
    Ok(SampleCache {
        inputs,
        tanh_out,
        standardized,
        raw_norm,
        embedding,
    })
}

/// Embed a batch. In train mode the running statistics move toward the
/// batch moments after the outputs are computed; eval mode never writes.
pub fn forward_batch(
    params: &mut ModelParams,
    xs: &[Vec<f64>],
) -> Result<(Vec<Embedding>, BatchCache)> {
    let std = standardizer(params);
    let samples: Vec<SampleCache> = xs
        .iter()
        .map(|x| forward_sample(params, x, std.as_ref()))
        .collect::<Result<_>>()?;
    if params.mode == Mode::Train && params.stats.is_some() && !samples.is_empty() {
        let dim = samples[0].tanh_out.last().unwrap().len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s.tanh_out.last().unwrap()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for s in &samples {
            for ((v, m), h) in var.iter_mut().zip(&mean).zip(s.tanh_out.last().unwrap()) {
                *v += (h - m) * (h - m) / n;
            }
        }
        let stats = params.stats.as_mut().unwrap();
        let momentum = params.config.stats_momentum;
        for (s, b) in stats.mean.iter_mut().zip(&mean) {
            *s = (1.0 - momentum) * *s + momentum * b;
        }
        for (s, b) in stats.var.iter_mut().zip(&var) {
            *s = (1.0 - momentum) * *s + momentum * b;
        }
    }
    let embeddings = samples
        .iter()
        .map(|s| Embedding(s.embedding.clone()))
        .collect();
    Ok((
        embeddings,
        BatchCache {
            samples,
            std_scale: std.map(|(_, scale)| scale),
            step: params.step,
        },
    ))
}

/// Single-input forward; equivalent to a batch of one.
pub fn forward(params: &mut ModelParams, x: &[f64]) -> Result<(Embedding, BatchCache)> {
    let (mut embeddings, cache) = forward_batch(params, std::slice::from_ref(&x.to_vec()))?;
    Ok((embeddings.pop().unwrap(), cache))
}

/// Pure eval-mode embedding: reads the model, never writes, ignores `mode`.
pub fn embed_eval(params: &ModelParams, x: &[f64]) -> Result<Embedding> {
    let std = standardizer(params);
    Ok(Embedding(forward_sample(params, x, std.as_ref())?.embedding))
}

/// Standardized activations entering the output layer in eval semantics.
pub fn penultimate_eval(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    let std = standardizer(params);
    Ok(forward_sample(params, x, std.as_ref())?.standardized)
}

/// Gradient holder with the same shapes as the corresponding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrads {
    pub hidden: Vec<(Vec<f64>, Vec<f64>)>,
    pub output: (Vec<f64>, Vec<f64>),
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ModelGrads {
            hidden: params
                .hidden_layers
                .iter()
                .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
                .collect(),
            output: (
                vec![0.0; params.output_layer.weight.len()],
                vec![0.0; params.output_layer.bias.len()],
            ),
        }
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, factor: f64) {
        for ((w, b), (ow, ob)) in self.hidden.iter_mut().zip(&other.hidden) {
            for (x, y) in w.iter_mut().zip(ow) {
                *x += factor * y;
            }
            for (x, y) in b.iter_mut().zip(ob) {
                *x += factor * y;
            }
        }
        for (x, y) in self.output.0.iter_mut().zip(&other.output.0) {
            *x += factor * y;
        }
        for (x, y) in self.output.1.iter_mut().zip(&other.output.1) {
            *x += factor * y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in self.hidden.iter_mut() {
            w.iter_mut().for_each(|x| *x *= factor);
            b.iter_mut().for_each(|x| *x *= factor);
        }
        self.output.0.iter_mut().for_each(|x| *x *= factor);
        self.output.1.iter_mut().for_each(|x| *x *= factor);
    }

    /// Linear access matching `ModelParams::get_param` indexing.
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for (w, b) in &self.hidden {
            if i < w.len() {
                return w[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        if i < self.output.0.len() {
            return self.output.0[i];
        }
        i -= self.output.0.len();
        self.output.1[i]
    }
}

/// Exact gradients of the cached forward composed with `grad_out`
/// (one vector per sample, each of embedding length). Returns parameter
/// gradients summed over the batch and the per-sample input gradients.
pub fn backward(
    params: &ModelParams,
    cache: &BatchCache,
    grad_out: &[Vec<f64>],
) -> Result<(ModelGrads, Vec<Vec<f64>>)> {
    if cache.step != params.step {
        return Err(Error::StaleCache {
            model_step: params.step,
            cache_step: cache.step,
        });
    }
    if grad_out.len() != cache.samples.len() {
        return Err(Error::DimensionMismatch {
            expected: cache.samples.len(),
            got: grad_out.len(),
        });
    }
    let mut grads = ModelGrads::zeros_like(params);
    let mut input_grads = Vec::with_capacity(cache.samples.len());

    for (s, g_e) in cache.samples.iter().zip(grad_out) {
        // L2 normalization: g_raw = (g_e - (g_e . e) e) / |raw|
        let dot: f64 = g_e.iter().zip(&s.embedding).map(|(a, b)| a * b).sum();
        let g_raw: Vec<f64> = g_e
            .iter()
            .zip(&s.embedding)
            .map(|(g, e)| (g - dot * e) / s.raw_norm)
            .collect();

        // output affine
        let out = &params.output_layer;
        let mut g_std = vec![0.0; out.in_dim];
        for r in 0..out.out_dim {
            let gw = &mut grads.output.0[r * out.in_dim..(r + 1) * out.in_dim];
            for (c, (gv, z)) in gw.iter_mut().zip(&s.standardized).enumerate() {
                *gv += g_raw[r] * z;
                g_std[c] += out.weight[r * out.in_dim + c] * g_raw[r];
            }
            grads.output.1[r] += g_raw[r];
        }

        // standardization: constant scale per feature, as captured at forward
        let mut g_h = match &cache.std_scale {
            Some(scale) => g_std.iter().zip(scale).map(|(g, s)| g * s).collect(),
            None => g_std,
        };

        // hidden stack in reverse: tanh then affine
        for (k, layer) in params.hidden_layers.iter().enumerate().rev() {
            let h = &s.tanh_out[k];
            let g_a: Vec<f64> = g_h.iter().zip(h).map(|(g, t)| g * (1.0 - t * t)).collect();
            let x = &s.inputs[k];
            let (gw, gb) = &mut grads.hidden[k];
            let mut g_x = vec![0.0; layer.in_dim];
            for r in 0..layer.out_dim {
                let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (c, (gv, xv)) in row.iter_mut().zip(x).enumerate() {
                    *gv += g_a[r] * xv;
                    g_x[c] += layer.weight[r * layer.in_dim + c] * g_a[r];
                }
                gb[r] += g_a[r];
            }
            g_h = g_x;
        }
        input_grads.push(g_h);
    }
    Ok((grads, input_grads))
}

/// Epoch learning rate: eta decayed by gamma per epoch, floored at eta_min.
pub fn lr_at_epoch(eta: f64, gamma: f64, eta_min: f64, epoch: usize) -> f64 {
    assert!(epoch >= 1, "epochs are 1-indexed");
    (eta * gamma.powi(epoch as i32 - 1)).max(eta_min)
}

/// SGD with coupled weight decay and momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub eta: f64,
    pub gamma: f64,
    pub eta_min: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub velocity: ModelGrads,
}

impl OptState {
    pub fn new(params: &ModelParams, eta: f64, gamma: f64, eta_min: f64, weight_decay: f64, momentum: f64) -> Self {
        OptState {
            eta,
            gamma,
            eta_min,
            weight_decay,
            momentum,
            velocity: ModelGrads::zeros_like(params),
        }
    }
}

fn sgd_update(theta: &mut [f64], grad: &[f64], velocity: &mut [f64], opt_wd: f64, opt_mu: f64, lr: f64) {
    for ((t, g), v) in theta.iter_mut().zip(grad).zip(velocity) {
        let g = g + opt_wd * *t;
        *v = opt_mu * *v + g;
        *t -= lr * *v;
    }
}

/// One optimizer step: g' = g + wd * theta; v <- mu * v + g'; theta <- theta - lr * v.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelGrads, opt: &mut OptState, lr: f64) {
    let (wd, mu) = (opt.weight_decay, opt.momentum);
    for ((layer, (gw, gb)), (vw, vb)) in params
        .hidden_layers
        .iter_mut()
        .zip(&grads.hidden)
        .zip(&mut opt.velocity.hidden)
    {
        sgd_update(&mut layer.weight, gw, vw, wd, mu, lr);
        sgd_update(&mut layer.bias, gb, vb, wd, mu, lr);
    }
    sgd_update(
        &mut params.output_layer.weight,
        &grads.output.0,
        &mut opt.velocity.output.0,
        wd,
        mu,
        lr,
    );
    sgd_update(
        &mut params.output_layer.bias,
        &grads.output.1,
        &mut opt.velocity.output.1,
        wd,
        mu,
        lr,
    );
    params.step += 1;
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Versioned training snapshot; round-trips bit-exactly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub epoch: usize,
    pub model: ModelParams,
    pub opt: OptState,
    pub rng: ChaCha12Rng,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
