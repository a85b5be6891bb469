//! Decoder-only transformer over scalar time series with a Student's-t
//! output head.
//!
//! The window enters through a linear value embedding, gets a learnable
//! positional term (a linear map of normalized position), runs through
//! causal self-attention blocks, and ends in three small MLPs producing
//! per-position location, scale, and degrees of freedom. Scale and dof are
//! softplus-constrained so every position parameterizes a valid t
//! distribution.

mod checkpoint;
mod forecast;

pub use forecast::{forecast_rollout, Forecast};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::util::derive_seed;

/// Additive attention-mask value for future positions. Large enough that
/// the stabilized softmax underflows those weights to exactly zero, which
/// is what makes causality bit-exact.
pub const CAUSAL_MASK_VALUE: f64 = -1e30;

/// Floor added to the softplus-constrained scale.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Shift added to the softplus-constrained degrees of freedom, keeping
/// variance finite.
pub const NU_SHIFT: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("window batch must be [batch, {expected}], got {got:?}")]
    BadWindowShape { expected: usize, got: Vec<usize> },
    #[error("forecast requires a non-empty context")]
    EmptyContext,
    #[error("forecast requires at least one sample trajectory")]
    NoSamples,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture hyperparameters. `theta_out` and `head_hidden_layers` are
/// part of the on-disk config for forward compatibility; only the
/// three-parameter Student's-t head is implemented.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_m: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    pub n_layers: usize,
    #[serde(default = "default_l_seq")]
    pub l_seq: usize,
    #[serde(default = "default_theta_out")]
    pub theta_out: usize,
    #[serde(default = "default_head_hidden_layers")]
    pub head_hidden_layers: usize,
    #[serde(default = "default_true")]
    pub pre_layer_norm: bool,
}

fn default_n_heads() -> usize {
    4
}
fn default_l_seq() -> usize {
    256
}
fn default_theta_out() -> usize {
    3
}
fn default_head_hidden_layers() -> usize {
    4
}
fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Construction-time validation. `n_layers = 0` is allowed here so a
    /// degenerate identity decoder can exist in tests; experiment plans use
    /// [`ModelConfig::validate_strict`].
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_m == 0 {
            return Err(ModelError::InvalidConfig("d_m must be at least 1".into()));
        }
        if self.n_heads == 0 {
            return Err(ModelError::InvalidConfig(
                "n_heads must be at least 1".into(),
            ));
        }
        if self.d_m % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "d_m ({}) must be divisible by n_heads ({})",
                self.d_m, self.n_heads
            )));
        }
        if self.l_seq < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "l_seq must be at least 2, got {}",
                self.l_seq
            )));
        }
        if self.theta_out != 3 {
            return Err(ModelError::InvalidConfig(format!(
                "theta_out must be 3 (Student's-t head), got {}",
                self.theta_out
            )));
        }
        Ok(())
    }

    pub fn validate_strict(&self) -> Result<(), ModelError> {
        self.validate()?;
        if self.n_layers == 0 {
            return Err(ModelError::InvalidConfig(
                "n_layers must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Width over depth, the quantity kept below 70 in sweeps.
    pub fn aspect_ratio(&self) -> f64 {
        self.d_m as f64 / self.n_layers as f64
    }
}

/// Exact trainable-parameter count for a config, by inventory:
/// value embedding `2d`, positional embedding `2d`, per layer
/// `4(d^2+d)` attention + `2d^2+2d` FFN + `4d` norms, final norm `2d`,
/// and `theta_out` head MLPs of `hhl` hidden layers each.
pub fn count_parameters(config: &ModelConfig) -> u64 {
    let d = config.d_m as u64;
    let per_layer = 6 * d * d + 10 * d;
    let head = config.theta_out as u64 * (config.head_hidden_layers as u64 * (d * d + d) + d + 1);
    2 * d + 2 * d + config.n_layers as u64 * per_layer + 2 * d + head
}

/// Transformer with named parameter tensors. Parameters live here, outside
/// any tape; each forward pass registers them as leaves.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Vec<(String, Tensor)>,
}

/// Handles to this model's parameters on a particular tape, in the same
/// order as [`Model::parameters`].
pub struct TapedParams {
    vars: Vec<Var>,
}

impl TapedParams {
    /// Wraps an explicit var list (e.g. leaves planted by a gradient
    /// checker). Order must match [`Model::parameters`].
    pub fn from_vars(vars: Vec<Var>) -> Self {
        TapedParams { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Per-position Student's-t parameters as tape nodes, each `[batch, l_seq]`.
pub struct THeadVars {
    pub mu: Var,
    pub sigma: Var,
    pub nu: Var,
}

/// Per-position Student's-t parameters as plain tensors.
pub struct THeadParams {
    pub mu: Tensor,
    pub sigma: Tensor,
    pub nu: Tensor,
}

/// Parameter layout: ordered (name, shape) pairs for a config. Checkpoint
/// loading validates against this, and `Model::new` allocates from it.
fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.d_m;
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("embed.value.w".into(), vec![1, d]),
        ("embed.value.b".into(), vec![d]),
        ("embed.pos.w".into(), vec![1, d]),
        ("embed.pos.b".into(), vec![d]),
    ];
    for i in 0..config.n_layers {
        out.push((format!("layer{i}.norm_attn.gain"), vec![d]));
        out.push((format!("layer{i}.norm_attn.bias"), vec![d]));
        for p in ["q", "k", "v", "o"] {
            out.push((format!("layer{i}.attn.w{p}"), vec![d, d]));
            out.push((format!("layer{i}.attn.b{p}"), vec![d]));
        }
        out.push((format!("layer{i}.norm_ffn.gain"), vec![d]));
        out.push((format!("layer{i}.norm_ffn.bias"), vec![d]));
        out.push((format!("layer{i}.ffn.w1"), vec![d, d]));
        out.push((format!("layer{i}.ffn.b1"), vec![d]));
        out.push((format!("layer{i}.ffn.w2"), vec![d, d]));
        out.push((format!("layer{i}.ffn.b2"), vec![d]));
    }
    out.push(("final_norm.gain".into(), vec![d]));
    out.push(("final_norm.bias".into(), vec![d]));
    for h in ["mu", "sigma", "nu"] {
        for j in 0..config.head_hidden_layers {
            out.push((format!("head.{h}.h{j}.w"), vec![d, d]));
            out.push((format!("head.{h}.h{j}.b"), vec![d]));
        }
        out.push((format!("head.{h}.out.w"), vec![d, 1]));
        out.push((format!("head.{h}.out.b"), vec![1]));
    }
    out
}

impl Model {
    /// Fresh model: weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// biases zero, norm gains one. Deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "init"));
        let mut params = Vec::new();
        for (name, shape) in layout(&config) {
            let tensor = if shape.len() == 2 {
                let fan_in = shape[0] as f64;
                let bound = 1.0 / fan_in.sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Tensor::new(&shape, data).expect("layout shapes are consistent")
            } else if name.ends_with(".gain") {
                Tensor::full(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            params.push((name, tensor));
        }
        Ok(Self { config, params })
    }

    fn from_parts(config: ModelConfig, params: Vec<(String, Tensor)>) -> Self {
        Self { config, params }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    /// Total trainable elements; always equals [`count_parameters`].
    pub fn num_parameters(&self) -> u64 {
        self.params.iter().map(|(_, t)| t.numel() as u64).sum()
    }

    fn param_index(&self, name: &str) -> usize {
        self.params
            .iter()
            .position(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("parameter {name} missing from layout"))
    }

    /// Registers every parameter on `tape`. With `trainable` set the leaves
    /// track gradients.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> TapedParams {
        TapedParams {
            vars: self
                .params
                .iter()
                .map(|(_, t)| tape.leaf(t.clone().with_requires_grad(trainable)))
                .collect(),
        }
    }

    fn var(&self, tp: &TapedParams, name: &str) -> Var {
        tp.vars[self.param_index(name)]
    }

    /// Full forward pass: windows `[batch, l_seq]` to per-position t
    /// parameters.
    pub fn forward(
        &self,
        tape: &mut Tape,
        tp: &TapedParams,
        inputs: &Tensor,
    ) -> Result<THeadVars, ModelError> {
        let tokens = self.embed(tape, tp, inputs)?;
        let decoded = self.decode(tape, tp, tokens)?;
        self.head(tape, tp, decoded)
    }

    /// No-gradient forward pass on a private tape.
    pub fn predict(&self, inputs: &Tensor) -> Result<THeadParams, ModelError> {
        let mut tape = Tape::new();
        let tp = self.register(&mut tape, false);
        let out = self.forward(&mut tape, &tp, inputs)?;
        Ok(THeadParams {
            mu: tape.to_tensor(out.mu),
            sigma: tape.to_tensor(out.sigma),
            nu: tape.to_tensor(out.nu),
        })
    }

    /// Value embedding plus positional embedding: `[batch, l_seq]` windows
    /// to `[batch, l_seq, d_m]` tokens. Position is normalized to
    /// `t / (l_seq - 1)`.
    fn embed(&self, tape: &mut Tape, tp: &TapedParams, inputs: &Tensor) -> Result<Var, ModelError> {
        let l = self.config.l_seq;
        if inputs.shape().len() != 2 || inputs.shape()[1] != l {
            return Err(ModelError::BadWindowShape {
                expected: l,
                got: inputs.shape().to_vec(),
            });
        }
        let batch = inputs.shape()[0];
        let x = tape.constant(inputs);
        let x3 = tape.reshape(x, &[batch, l, 1])?;
        let wv = self.var(tp, "embed.value.w");
        let bv = self.var(tp, "embed.value.b");
        let value_emb = tape.linear(x3, wv, bv)?;
        let positions: Vec<f64> = (0..l).map(|t| t as f64 / (l - 1) as f64).collect();
        let pos = Tensor::new(&[l, 1], positions).expect("position shape");
        let posv = tape.constant(&pos);
        let wp = self.var(tp, "embed.pos.w");
        let bp = self.var(tp, "embed.pos.b");
        let pos_emb = tape.linear(posv, wp, bp)?;
        Ok(tape.add(value_emb, pos_emb)?)
    }

    /// The stack of causal attention blocks. Zero layers is the identity.
    fn decode(&self, tape: &mut Tape, tp: &TapedParams, tokens: Var) -> Result<Var, ModelError> {
        let mut h = tokens;
        for i in 0..self.config.n_layers {
            let ng = self.var(tp, &format!("layer{i}.norm_attn.gain"));
            let nb = self.var(tp, &format!("layer{i}.norm_attn.bias"));
            let fg = self.var(tp, &format!("layer{i}.norm_ffn.gain"));
            let fb = self.var(tp, &format!("layer{i}.norm_ffn.bias"));
            if self.config.pre_layer_norm {
                let a_in = tape.layer_norm(h, ng, nb)?;
                let attn = self.attention(tape, tp, i, a_in)?;
                h = tape.add(h, attn)?;
                let f_in = tape.layer_norm(h, fg, fb)?;
                let ff = self.ffn(tape, tp, i, f_in)?;
                h = tape.add(h, ff)?;
            } else {
                let attn = self.attention(tape, tp, i, h)?;
                let res = tape.add(h, attn)?;
                h = tape.layer_norm(res, ng, nb)?;
                let ff = self.ffn(tape, tp, i, h)?;
                let res = tape.add(h, ff)?;
                h = tape.layer_norm(res, fg, fb)?;
            }
        }
        Ok(h)
    }

    /// Multi-head causal self-attention over `[batch, l, d]` activations.
    fn attention(
        &self,
        tape: &mut Tape,
        tp: &TapedParams,
        layer: usize,
        a_in: Var,
    ) -> Result<Var, ModelError> {
        let d = self.config.d_m;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let l = self.config.l_seq;
        let batch = tape.shape(a_in)[0];
        let split = |tape: &mut Tape, v: Var| -> Result<Var, TensorError> {
            let r = tape.reshape(v, &[batch, l, heads, dh])?;
            tape.transpose(r, 1, 2) // [batch, heads, l, dh]
        };
        let wq = self.var(tp, &format!("layer{layer}.attn.wq"));
        let bq = self.var(tp, &format!("layer{layer}.attn.bq"));
        let wk = self.var(tp, &format!("layer{layer}.attn.wk"));
        let bk = self.var(tp, &format!("layer{layer}.attn.bk"));
        let wv = self.var(tp, &format!("layer{layer}.attn.wv"));
        let bv = self.var(tp, &format!("layer{layer}.attn.bv"));
        let q = tape.linear(a_in, wq, bq)?;
        let k = tape.linear(a_in, wk, bk)?;
        let v = tape.linear(a_in, wv, bv)?;
        let q = split(tape, q)?;
        let k = split(tape, k)?;
        let v = split(tape, v)?;
        let kt = tape.transpose(k, 2, 3)?;
        let scores = tape.matmul(q, kt)?;
        let scaled = tape.mul_scalar(scores, 1.0 / (dh as f64).sqrt());
        let mask = causal_mask(l);
        let maskv = tape.constant(&mask);
        let masked = tape.add(scaled, maskv)?;
        let weights = tape.softmax(masked, 3)?;
        let ctx = tape.matmul(weights, v)?;
        let merged = tape.transpose(ctx, 1, 2)?;
        let flat = tape.reshape(merged, &[batch, l, d])?;
        let wo = self.var(tp, &format!("layer{layer}.attn.wo"));
        let bo = self.var(tp, &format!("layer{layer}.attn.bo"));
        Ok(tape.linear(flat, wo, bo)?)
    }

    /// Two-layer ReLU feed-forward, width `d_m` throughout.
    fn ffn(
        &self,
        tape: &mut Tape,
        tp: &TapedParams,
        layer: usize,
        f_in: Var,
    ) -> Result<Var, ModelError> {
        let w1 = self.var(tp, &format!("layer{layer}.ffn.w1"));
        let b1 = self.var(tp, &format!("layer{layer}.ffn.b1"));
        let w2 = self.var(tp, &format!("layer{layer}.ffn.w2"));
        let b2 = self.var(tp, &format!("layer{layer}.ffn.b2"));
        let h = tape.linear(f_in, w1, b1)?;
        let r = tape.relu(h);
        Ok(tape.linear(r, w2, b2)?)
    }

    /// Final norm plus the three head MLPs. Output parameters are
    /// constrained: `sigma = softplus(raw) + 1e-6`, `nu = 2 + softplus(raw)`.
    fn head(&self, tape: &mut Tape, tp: &TapedParams, decoded: Var) -> Result<THeadVars, ModelError> {
        let g = self.var(tp, "final_norm.gain");
        let b = self.var(tp, "final_norm.bias");
        let hn = tape.layer_norm(decoded, g, b)?;
        let batch = tape.shape(hn)[0];
        let l = self.config.l_seq;
        let mut raw = Vec::with_capacity(3);
        for name in ["mu", "sigma", "nu"] {
            let mut t = hn;
            for j in 0..self.config.head_hidden_layers {
                let w = self.var(tp, &format!("head.{name}.h{j}.w"));
                let bb = self.var(tp, &format!("head.{name}.h{j}.b"));
                let lin = tape.linear(t, w, bb)?;
                t = tape.relu(lin);
            }
            let w = self.var(tp, &format!("head.{name}.out.w"));
            let bb = self.var(tp, &format!("head.{name}.out.b"));
            let out = tape.linear(t, w, bb)?;
            raw.push(tape.reshape(out, &[batch, l])?);
        }
        let sigma = {
            let sp = tape.softplus(raw[1]);
            tape.add_scalar(sp, SIGMA_FLOOR)
        };
        let nu = {
            let sp = tape.softplus(raw[2]);
            tape.add_scalar(sp, NU_SHIFT)
        };
        Ok(THeadVars {
            mu: raw[0],
            sigma,
            nu,
        })
    }
}

/// `[l, l]` additive mask: zero at or below the diagonal, a large negative
/// number above it.
fn causal_mask(l: usize) -> Tensor {
    let mut data = vec![0.0; l * l];
    for i in 0..l {
        for j in (i + 1)..l {
            data[i * l + j] = CAUSAL_MASK_VALUE;
        }
    }
    Tensor::new(&[l, l], data).expect("mask shape")
}
