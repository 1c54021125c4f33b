//! Dense Q-network written out by hand: a per-neighbor embedding averaged
//! over the observed teammates, a shared trunk, and dueling value/advantage
//! streams. Parameters live in one flat `f64` buffer so that optimizer state,
//! target copies and checkpoints are plain slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

pub const NEIGHBOR_FEATURES: usize = 3;
pub const LOCAL_FEATURES: usize = 6;

pub const LAYER_NAMES: [&str; 6] = ["embed", "trunk", "adv_hidden", "adv_out", "val_hidden", "val_out"];
const EMBED: usize = 0;
const TRUNK: usize = 1;
const ADV_HIDDEN: usize = 2;
const ADV_OUT: usize = 3;
const VAL_HIDDEN: usize = 4;
const VAL_OUT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub embed: usize,
    pub trunk: usize,
    pub stream: usize,
    pub actions: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            embed: 128,
            trunk: 128,
            stream: 64,
            actions: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub inputs: usize,
    pub outputs: usize,
    /// Start of the row-major `inputs x outputs` weight block; the bias
    /// follows immediately.
    pub offset: usize,
}

impl LayerSpec {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

impl Architecture {
    pub fn layers(&self) -> [LayerSpec; 6] {
        let dims = [
            (NEIGHBOR_FEATURES, self.embed),
            (self.embed + LOCAL_FEATURES, self.trunk),
            (self.trunk, self.stream),
            (self.stream, self.actions),
            (self.trunk, self.stream),
            (self.stream, 1),
        ];
        let mut offset = 0;
        let mut out = [LayerSpec {
            name: "",
            inputs: 0,
            outputs: 0,
            offset: 0,
        }; 6];
        for (k, (inputs, outputs)) in dims.into_iter().enumerate() {
            out[k] = LayerSpec {
                name: LAYER_NAMES[k],
                inputs,
                outputs,
                offset,
            };
            offset += out[k].param_count();
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(LayerSpec::param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.trunk == 0 || self.stream == 0 || self.actions == 0 {
            return Err(Error::Shape(format!("all layer widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub data: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            data: vec![0.0; arch.num_params()],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut params = Self::zeros(arch);
        for layer in arch.layers() {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut params.data[layer.weight_range()] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub fn from_data(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        if data.len() != arch.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                data.len()
            )));
        }
        Ok(Self { arch, data })
    }

    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let spec = self.arch.layers()[k];
        (&self.data[spec.weight_range()], &self.data[spec.bias_range()])
    }

    pub fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let spec = self.arch.layers()[k];
        let (w, rest) = self.data[spec.offset..spec.offset + spec.param_count()].split_at_mut(spec.inputs * spec.outputs);
        (w, rest)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Deep copy for use as the target network.
    pub fn clone_into_target(&self) -> NetworkParams {
        self.clone()
    }
}

/// Network input for one pursuer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedObservation {
    pub neighbors: Vec<[f64; NEIGHBOR_FEATURES]>,
    pub local: [f64; LOCAL_FEATURES],
}

/// Maps raw observations to bounded features: distances are scaled into
/// [0, 1] and bearings become (sin, cos) pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationEncoder {
    pub d_sense: f64,
    /// Scale for the evader distance, which is observed at any range.
    pub evader_scale: f64,
}

impl ObservationEncoder {
    pub fn encode(&self, obs: &Observation) -> EncodedObservation {
        let unit = |d: f64, scale: f64| (d / scale).clamp(0.0, 1.0);
        EncodedObservation {
            neighbors: obs
                .neighbors
                .iter()
                .map(|n| [unit(n.distance, self.d_sense), n.bearing.sin(), n.bearing.cos()])
                .collect(),
            local: [
                unit(obs.d_o, self.d_sense),
                obs.phi_o.sin(),
                obs.phi_o.cos(),
                unit(obs.d_e, self.evader_scale),
                obs.phi_e.sin(),
                obs.phi_e.cos(),
            ],
        }
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Neighbor features in the canonical (sorted) summation order.
    neighbors: Vec<[f64; NEIGHBOR_FEATURES]>,
    /// Per-neighbor embedding pre-activations, `neighbors.len() x embed`.
    embed_pre: Vec<f64>,
    /// Concatenation of the pooled embedding and the local features.
    trunk_in: Vec<f64>,
    trunk_pre: Vec<f64>,
    trunk_out: Vec<f64>,
    adv_pre: Vec<f64>,
    adv_hidden: Vec<f64>,
    advantages: Vec<f64>,
    val_pre: Vec<f64>,
    val_hidden: Vec<f64>,
    pub value: f64,
    pub q: Vec<f64>,
}

impl ForwardCache {
    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn pooled_embedding(&self) -> &[f64] {
        &self.trunk_in[..self.trunk_in.len() - LOCAL_FEATURES]
    }
}

fn dense(weights: &[f64], bias: &[f64], input: &[f64], out: &mut Vec<f64>) {
    let n_out = bias.len();
    out.clear();
    out.extend_from_slice(bias);
    for (i, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &weights[i * n_out..(i + 1) * n_out];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
}

/// Dot product with four fixed partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow {
            layer,
            name: LAYER_NAMES[layer],
        })
    }
}

/// Mean of ReLU(W f + b) over neighbors; zero when there are none. Neighbors
/// are sorted first so the float summation order is input-order independent.
pub fn embed(params: &NetworkParams, neighbors: &[[f64; NEIGHBOR_FEATURES]]) -> Result<Vec<f64>> {
    let (pooled, _, _) = embed_with_cache(params, neighbors)?;
    Ok(pooled)
}

type EmbedParts = (Vec<f64>, Vec<[f64; NEIGHBOR_FEATURES]>, Vec<f64>);

fn embed_with_cache(params: &NetworkParams, neighbors: &[[f64; NEIGHBOR_FEATURES]]) -> Result<EmbedParts> {
    let width = params.arch.embed;
    let mut sorted = neighbors.to_vec();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (w, b) = params.layer(EMBED);
    let mut pooled = vec![0.0; width];
    let mut pre_all = Vec::with_capacity(sorted.len() * width);
    let mut pre = Vec::with_capacity(width);
    for f in &sorted {
        dense(w, b, f, &mut pre);
        check_finite(&pre, EMBED)?;
        for (acc, &v) in pooled.iter_mut().zip(&pre) {
            *acc += v.max(0.0);
        }
        pre_all.extend_from_slice(&pre);
    }
    if !sorted.is_empty() {
        let m = sorted.len() as f64;
        for v in &mut pooled {
            *v /= m;
        }
    }
    Ok((pooled, sorted, pre_all))
}

pub fn forward(params: &NetworkParams, obs: &EncodedObservation) -> Result<ForwardCache> {
    let (pooled, neighbors, embed_pre) = embed_with_cache(params, &obs.neighbors)?;
    let mut trunk_in = pooled;
    trunk_in.extend_from_slice(&obs.local);

    let mut trunk_pre = Vec::new();
    let (w, b) = params.layer(TRUNK);
    dense(w, b, &trunk_in, &mut trunk_pre);
    check_finite(&trunk_pre, TRUNK)?;
    let trunk_out = relu(&trunk_pre);

    let mut adv_pre = Vec::new();
    let (w, b) = params.layer(ADV_HIDDEN);
    dense(w, b, &trunk_out, &mut adv_pre);
    check_finite(&adv_pre, ADV_HIDDEN)?;
    let adv_hidden = relu(&adv_pre);
    let mut advantages = Vec::new();
    let (w, b) = params.layer(ADV_OUT);
    dense(w, b, &adv_hidden, &mut advantages);
    check_finite(&advantages, ADV_OUT)?;

    let mut val_pre = Vec::new();
    let (w, b) = params.layer(VAL_HIDDEN);
    dense(w, b, &trunk_out, &mut val_pre);
    check_finite(&val_pre, VAL_HIDDEN)?;
    let val_hidden = relu(&val_pre);
    let mut value = Vec::new();
    let (w, b) = params.layer(VAL_OUT);
    dense(w, b, &val_hidden, &mut value);
    check_finite(&value, VAL_OUT)?;
    let value = value[0];

    let mean_adv = advantages.iter().sum::<f64>() / advantages.len() as f64;
    let q = advantages.iter().map(|a| value + a - mean_adv).collect();
    Ok(ForwardCache {
        neighbors,
        embed_pre,
        trunk_in,
        trunk_pre,
        trunk_out,
        adv_pre,
        adv_hidden,
        advantages,
        val_pre,
        val_hidden,
        value,
        q,
    })
}

pub fn q_forward(params: &NetworkParams, obs: &EncodedObservation) -> Result<Vec<f64>> {
    Ok(forward(params, obs)?.q)
}

/// Backpropagates through one dense layer. Accumulates weight/bias
/// gradients into `grads` and returns the gradient w.r.t. the input when
/// `want_input` is set.
fn dense_backward(
    params: &NetworkParams,
    grads: &mut [f64],
    layer: usize,
    input: &[f64],
    grad_out: &[f64],
    want_input: bool,
) -> Vec<f64> {
    let spec = params.arch.layers()[layer];
    let w = &params.data[spec.weight_range()];
    let n_out = spec.outputs;
    let (gw, gb) = grads[spec.offset..spec.offset + spec.param_count()].split_at_mut(spec.inputs * n_out);
    for (b, &g) in gb.iter_mut().zip(grad_out) {
        *b += g;
    }
    for (i, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (gwi, &g) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(grad_out) {
            *gwi += g * x;
        }
    }
    if want_input {
        (0..spec.inputs).map(|i| dot(&w[i * n_out..(i + 1) * n_out], grad_out)).collect()
    } else {
        Vec::new()
    }
}

fn relu_backward(grad: &mut [f64], pre: &[f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Accumulates dL/dθ into `grads` given dL/dQ for every action.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, grad_q: &[f64], grads: &mut [f64]) {
    let arch = params.arch;
    let h = grad_q.len() as f64;
    let grad_value = grad_q.iter().sum::<f64>();
    let grad_adv: Vec<f64> = grad_q.iter().map(|g| g - grad_value / h).collect();

    let mut g_adv_hidden = dense_backward(params, grads, ADV_OUT, &cache.adv_hidden, &grad_adv, true);
    relu_backward(&mut g_adv_hidden, &cache.adv_pre);
    let g_trunk_a = dense_backward(params, grads, ADV_HIDDEN, &cache.trunk_out, &g_adv_hidden, true);

    let mut g_val_hidden = dense_backward(params, grads, VAL_OUT, &cache.val_hidden, &[grad_value], true);
    relu_backward(&mut g_val_hidden, &cache.val_pre);
    let g_trunk_v = dense_backward(params, grads, VAL_HIDDEN, &cache.trunk_out, &g_val_hidden, true);

    let mut g_trunk: Vec<f64> = g_trunk_a.iter().zip(&g_trunk_v).map(|(a, b)| a + b).collect();
    relu_backward(&mut g_trunk, &cache.trunk_pre);
    let want_embed = !cache.neighbors.is_empty();
    let g_trunk_in = dense_backward(params, grads, TRUNK, &cache.trunk_in, &g_trunk, want_embed);

    if want_embed {
        let m = cache.neighbors.len() as f64;
        let width = arch.embed;
        for (k, f) in cache.neighbors.iter().enumerate() {
            let pre = &cache.embed_pre[k * width..(k + 1) * width];
            let mut g: Vec<f64> = g_trunk_in[..width].iter().map(|v| v / m).collect();
            relu_backward(&mut g, pre);
            dense_backward(params, grads, EMBED, f, &g, false);
        }
    }
}

/// Gradient of `is_weight * 0.5 * td_error^2` where `td_error = y - Q(a)`.
pub fn q_backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    action: usize,
    td_error: f64,
    is_weight: f64,
    grads: &mut [f64],
) {
    let mut grad_q = vec![0.0; cache.q.len()];
    grad_q[action] = -is_weight * td_error;
    backward(params, cache, &grad_q, grads);
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} slots, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut NetworkParams, grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(&mut params.data, grads, lr)
}
