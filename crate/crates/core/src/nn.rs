//! Dense MLP with hand-written backprop and Adam, in f64 throughout.
//!
//! The loss primitive is a per-output *weighted* squared error: callers mask
//! outputs by setting weights, which is how Q-learning updates touch only the
//! taken action. `forward_and_backward` exposes the raw output-gradient hook
//! for losses that are not squared error (the conservative penalty in `cql`).

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
#[cfg(test)]
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("model needs at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("shape mismatch: expected input of length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad model file: {0}")]
    BadFormat(String),
}

/// Magic + version for the flat binary model format.
const MODEL_MAGIC: &[u8; 4] = b"ORLM";
const MODEL_VERSION: u32 = 1;

/// One dense layer; `w` is row-major `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer { w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim], out_dim, in_dim }
    }
}

/// Fully-connected network: ReLU on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

/// Per-parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<DenseLayer>,
}

impl Grads {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Grads {
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

impl MlpModel {
    /// Gaussian init: weights ~ N(0, 1/fan_in), biases zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers(layer_sizes.len()));
        }
        let mut rng = rng::stream(seed, "mlp-init");
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let sigma = 1.0 / (in_dim as f64).sqrt();
            let w = (0..in_dim * out_dim)
                .map(|_| sigma * rng::standard_normal(&mut rng))
                .collect();
            layers.push(DenseLayer { w, b: vec![0.0; out_dim], out_dim, in_dim });
        }
        Ok(MlpModel { layer_sizes: layer_sizes.to_vec(), layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Forward pass. Pure: no internal state.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::ShapeMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            act = affine(layer, &act);
            if i != last {
                for v in &mut act {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(act)
    }

    /// Serialize to the flat binary format: magic, version, layer count,
    /// layer sizes, then per-layer weights (row-major) and biases, f64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.num_params());
        out.extend_from_slice(MODEL_MAGIC);
        out.write_u32::<LittleEndian>(MODEL_VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.layer_sizes.len() as u32).unwrap();
        for &s in &self.layer_sizes {
            out.write_u64::<LittleEndian>(s as u64).unwrap();
        }
        for layer in &self.layers {
            for &v in layer.w.iter().chain(layer.b.iter()) {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(NnError::BadFormat("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != MODEL_VERSION {
            return Err(NnError::BadFormat(format!("unsupported version {version}")));
        }
        let n_sizes = r.read_u32::<LittleEndian>()? as usize;
        if n_sizes < 2 {
            return Err(NnError::BadFormat("fewer than 2 layer sizes".into()));
        }
        let mut layer_sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            layer_sizes.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let mut layers = Vec::with_capacity(n_sizes - 1);
        for pair in layer_sizes.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let mut layer = DenseLayer::zeros(in_dim, out_dim);
            for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *v = r.read_f64::<LittleEndian>()?;
            }
            layers.push(layer);
        }
        if !r.is_empty() {
            return Err(NnError::BadFormat("trailing bytes".into()));
        }
        Ok(MlpModel { layer_sizes, layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

fn affine(layer: &DenseLayer, input: &[f64]) -> Vec<f64> {
    let mut out = layer.b.clone();
    for o in 0..layer.out_dim {
        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        out[o] += acc;
    }
    out
}

/// Forward the batch, then backprop the caller-supplied output gradient.
/// `out_grad(i, y)` returns dL/dy for sample `i` with output `y`.
/// Returns the per-sample outputs and the summed parameter gradients.
pub fn forward_and_backward<F>(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    mut out_grad: F,
) -> Result<(Vec<Vec<f64>>, Grads), NnError>
where
    F: FnMut(usize, &[f64]) -> Vec<f64>,
{
    let mut grads = Grads::zeros_like(model);
    let mut outputs = Vec::with_capacity(inputs.len());
    let last = model.layers.len() - 1;
    for (i, input) in inputs.iter().enumerate() {
        if input.len() != model.input_dim() {
            return Err(NnError::ShapeMismatch { expected: model.input_dim(), got: input.len() });
        }
        // Forward, keeping post-activation values per layer.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len() + 1);
        acts.push(input.clone());
        for (li, layer) in model.layers.iter().enumerate() {
            let mut a = affine(layer, acts.last().unwrap());
            if li != last {
                for v in &mut a {
                    *v = v.max(0.0);
                }
            }
            acts.push(a);
        }
        let output = acts.last().unwrap().clone();
        let mut delta = out_grad(i, &output);
        debug_assert_eq!(delta.len(), model.output_dim());
        // Backward.
        for li in (0..model.layers.len()).rev() {
            let layer = &model.layers[li];
            let below = &acts[li];
            let g = &mut grads.layers[li];
            for o in 0..layer.out_dim {
                g.b[o] += delta[o];
                let grow = &mut g.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in grow.iter_mut().zip(below) {
                    *gw += delta[o] * xi;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += delta[o] * wi;
                    }
                }
                // ReLU mask from the post-activation value below.
                for (p, a) in prev.iter_mut().zip(below) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        outputs.push(output);
    }
    Ok((outputs, grads))
}

/// Loss `1/(2N) * sum_n sum_o w[n][o] * (y[n][o] - t[n][o])^2` and its exact
/// gradients.
pub fn grad_weighted_sq(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    weights: &[Vec<f64>],
) -> Result<(f64, Grads), NnError> {
    assert_eq!(inputs.len(), targets.len());
    assert_eq!(inputs.len(), weights.len());
    let n = inputs.len() as f64;
    let mut loss = 0.0;
    let (_, grads) = forward_and_backward(model, inputs, |i, y| {
        let t = &targets[i];
        let w = &weights[i];
        assert_eq!(t.len(), y.len());
        assert_eq!(w.len(), y.len());
        y.iter()
            .zip(t.iter().zip(w))
            .map(|(&yi, (&ti, &wi))| {
                loss += 0.5 * wi * (yi - ti) * (yi - ti) / n;
                wi * (yi - ti) / n
            })
            .collect()
    })?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_step_size(step_size: f64) -> Self {
        AdamConfig { step_size, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        // Paper-default learning rate.
        AdamConfig::with_step_size(5e-5)
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Grads,
    v: Grads,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, cfg: AdamConfig) -> Self {
        AdamState { cfg, m: Grads::zeros_like(model), v: Grads::zeros_like(model), step: 0 }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(model: &mut MlpModel, grads: &Grads, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig { step_size, beta1, beta2, eps } = state.cfg;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (li, layer) in model.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut state.m.layers[li];
        let v = &mut state.v.layers[li];
        for ((p, gi), (mi, vi)) in layer
            .w
            .iter_mut()
            .chain(layer.b.iter_mut())
            .zip(g.w.iter().chain(g.b.iter()))
            .zip(m.w.iter_mut().chain(m.b.iter_mut()).zip(v.w.iter_mut().chain(v.b.iter_mut())))
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *p -= step_size * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Polyak update: target <- tau * online + (1 - tau) * target.
pub fn soft_update(target: &mut MlpModel, online: &MlpModel, tau: f64) {
    assert_eq!(target.layer_sizes, online.layer_sizes);
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        for (tp, op) in tl.w.iter_mut().chain(tl.b.iter_mut()).zip(ol.w.iter().chain(ol.b.iter())) {
            *tp = tau * op + (1.0 - tau) * *tp;
        }
    }
}
