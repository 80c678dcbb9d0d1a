//! Small dense tanh networks with hand-written backpropagation and Adam.
//!
//! Both the actor (`48 -> 64 -> 64 -> 6`, softmax head) and the critic
//! (`48 -> 64 -> 64 -> 1`) use the same [`Mlp`] type. Parameters live in one
//! flat `f64` buffer (`W1, b1, W2, b2, W3, b3`, weights row-major as
//! `out x in`), which keeps the optimizer and gradient arithmetic trivial.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::OBS_DIM;
use crate::N_LEVELS;

pub const HIDDEN: usize = 64;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGrad,
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: [usize; 4],
    params: Vec<f64>,
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

fn param_count(arch: &[usize; 4]) -> usize {
    (0..3).map(|l| arch[l + 1] * arch[l] + arch[l + 1]).sum()
}

impl Mlp {
    pub fn zeros(arch: [usize; 4]) -> Self {
        Mlp { arch, params: vec![0.0; param_count(&arch)] }
    }

    /// Fan-balanced uniform weights `U(-sqrt(6/(fan_in+fan_out)), +..)`, zero biases.
    pub fn init(arch: [usize; 4], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::zeros(arch);
        for l in 0..3 {
            let (fan_in, fan_out) = (arch[l], arch[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = net.layer_range(l);
            for p in &mut net.params[w] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn actor(seed: u64) -> Self {
        Mlp::init([OBS_DIM, HIDDEN, HIDDEN, N_LEVELS], seed)
    }

    pub fn critic(seed: u64) -> Self {
        Mlp::init([OBS_DIM, HIDDEN, HIDDEN, 1], seed)
    }

    pub fn arch(&self) -> [usize; 4] {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn out_dim(&self) -> usize {
        self.arch[3]
    }

    /// A zero buffer shaped like the parameters.
    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    /// Index ranges of layer `l`'s weights and biases in the flat buffer.
    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for i in 0..l {
            off += self.arch[i + 1] * self.arch[i] + self.arch[i + 1];
        }
        let nw = self.arch[l + 1] * self.arch[l];
        (off..off + nw, off + nw..off + nw + self.arch[l + 1])
    }

    pub fn forward(&self, x: &[f64]) -> Activations {
        let mut act = Activations::default();
        self.forward_into(x, &mut act);
        act
    }

    pub fn forward_into(&self, x: &[f64], act: &mut Activations) {
        debug_assert_eq!(x.len(), self.arch[0]);
        dense(&self.params, self.layer_range(0), self.arch[0], x, &mut act.h1);
        act.h1.iter_mut().for_each(|v| *v = v.tanh());
        dense(&self.params, self.layer_range(1), self.arch[1], &act.h1, &mut act.h2);
        act.h2.iter_mut().for_each(|v| *v = v.tanh());
        dense(&self.params, self.layer_range(2), self.arch[2], &act.h2, &mut act.out);
    }

    /// Adds this sample's parameter gradient to `grad`, given `d loss / d out`.
    pub fn backward_accumulate(&self, x: &[f64], act: &Activations, dout: &[f64], grad: &mut [f64]) {
        let [n0, n1, n2, n3] = self.arch;
        let p = &self.params;

        let (w3, b3) = self.layer_range(2);
        let mut dh2 = vec![0.0; n2];
        for i in 0..n3 {
            let d = dout[i];
            if d == 0.0 {
                continue;
            }
            grad[b3.start + i] += d;
            let row = w3.start + i * n2;
            for j in 0..n2 {
                grad[row + j] += d * act.h2[j];
                dh2[j] += p[row + j] * d;
            }
        }
        for j in 0..n2 {
            dh2[j] *= 1.0 - act.h2[j] * act.h2[j];
        }

        let (w2, b2) = self.layer_range(1);
        let mut dh1 = vec![0.0; n1];
        for i in 0..n2 {
            let d = dh2[i];
            grad[b2.start + i] += d;
            let row = w2.start + i * n1;
            for j in 0..n1 {
                grad[row + j] += d * act.h1[j];
                dh1[j] += p[row + j] * d;
            }
        }
        for j in 0..n1 {
            dh1[j] *= 1.0 - act.h1[j] * act.h1[j];
        }

        let (w1, b1) = self.layer_range(0);
        for i in 0..n1 {
            let d = dh1[i];
            grad[b1.start + i] += d;
            let row = w1.start + i * n0;
            for j in 0..n0 {
                grad[row + j] += d * x[j];
            }
        }
    }

    /// Gradient of `sum_i upstream[i] . out(batch[i])` with respect to the
    /// parameters. Callers fold any batch averaging into `upstream`.
    pub fn backward(&self, batch: &[&[f64]], upstream: &[Vec<f64>]) -> Result<Vec<f64>, MlpError> {
        if batch.len() != upstream.len() {
            return Err(MlpError::ShapeMismatch(format!(
                "{} inputs but {} upstream gradients",
                batch.len(),
                upstream.len()
            )));
        }
        let mut grad = self.zero_grad();
        let mut act = Activations::default();
        for (x, up) in batch.iter().zip(upstream) {
            if x.len() != self.arch[0] || up.len() != self.arch[3] {
                return Err(MlpError::ShapeMismatch(format!(
                    "input {} / upstream {} vs arch {:?}",
                    x.len(),
                    up.len(),
                    self.arch
                )));
            }
            self.forward_into(x, &mut act);
            self.backward_accumulate(x, &act, up, &mut grad);
        }
        Ok(grad)
    }

    pub fn to_model_file(&self, meta: ModelMeta) -> ModelFile {
        let layers = (0..3)
            .map(|l| {
                let (w, b) = self.layer_range(l);
                let cols = self.arch[l];
                LayerWeights {
                    w: self.params[w].chunks(cols).map(<[f64]>::to_vec).collect(),
                    b: self.params[b].to_vec(),
                }
            })
            .collect();
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            arch: self.arch.to_vec(),
            activation: "tanh".into(),
            weights: layers,
            meta,
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self, MlpError> {
        let bad = |m: String| MlpError::Format(m);
        if file.version != MODEL_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", file.version)));
        }
        if file.activation != "tanh" {
            return Err(bad(format!("unsupported activation {:?}", file.activation)));
        }
        let arch: [usize; 4] = file
            .arch
            .as_slice()
            .try_into()
            .map_err(|_| bad(format!("arch must have 4 entries, got {:?}", file.arch)))?;
        if file.weights.len() != 3 {
            return Err(bad("expected 3 layers".into()));
        }
        let mut net = Mlp::zeros(arch);
        for (l, layer) in file.weights.iter().enumerate() {
            let (w, b) = net.layer_range(l);
            if layer.w.len() != arch[l + 1] || layer.w.iter().any(|r| r.len() != arch[l]) || layer.b.len() != arch[l + 1] {
                return Err(bad(format!("layer {l} shape does not match arch")));
            }
            let flat: Vec<f64> = layer.w.iter().flatten().copied().collect();
            net.params[w].copy_from_slice(&flat);
            net.params[b].copy_from_slice(&layer.b);
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite weight".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path, meta: ModelMeta) -> crate::error::Result<()> {
        let json = serde_json::to_string(&self.to_model_file(meta))?;
        std::fs::write(path, json).map_err(|e| crate::error::Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::error::Result<(Mlp, ModelMeta)> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| MlpError::Format(e.to_string()))?;
        Ok((Mlp::from_model_file(&file)?, file.meta))
    }
}

fn dense(params: &[f64], (w, b): (std::ops::Range<usize>, std::ops::Range<usize>), n_in: usize, x: &[f64], out: &mut Vec<f64>) {
    let weights = &params[w];
    let bias = &params[b];
    out.clear();
    out.extend(bias.iter().enumerate().map(|(i, &bi)| {
        let row = &weights[i * n_in..(i + 1) * n_in];
        bi + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Action distribution and raw logits for one observation.
pub fn actor_forward(actor: &Mlp, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MlpError> {
    check_input(actor, obs)?;
    let logits = actor.forward(obs).out;
    Ok((softmax(&logits), logits))
}

pub fn critic_forward(critic: &Mlp, obs: &[f64]) -> Result<f64, MlpError> {
    check_input(critic, obs)?;
    Ok(critic.forward(obs).out[0])
}

fn check_input(net: &Mlp, obs: &[f64]) -> Result<(), MlpError> {
    if obs.len() != net.arch[0] {
        return Err(MlpError::ShapeMismatch(format!("input has {} entries, expected {}", obs.len(), net.arch[0])));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(MlpError::NonFiniteInput);
    }
    Ok(())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), MlpError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(MlpError::ShapeMismatch("adam buffers".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(MlpError::NonFiniteGrad);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    /// `"bc"` or `"rl"`.
    pub stage: String,
}

/// Versioned JSON model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub arch: Vec<usize>,
    pub activation: String,
    pub weights: Vec<LayerWeights>,
    pub meta: ModelMeta,
}
