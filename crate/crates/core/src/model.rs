//! Feed-forward prognostic model: `input -> ReLU hidden layers (dropout) -> 2`
//! raw outputs mapped to a positive Weibull `(scale, shape)` by
//! `softplus(u) + floor`. Gradients are backpropagated by hand.
//!
//! # Checkpoint layout
//!
//! All integers and floats little-endian.
//!
//! ```text
//! magic    8 bytes   "IEOPDMCK"
//! version  u32       1
//! hdr_len  u32       length of the JSON header in bytes
//! header   hdr_len   UTF-8 JSON: {"config": ModelConfig, "seed": u64, "step": u64,
//!                    "layers": [[out, in], ...]}
//! tensors  f64 * n   for each layer: weights (row-major, out x in), then bias (out)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, tag};
use crate::rul_dist::{WeibullDiscretizer, WeibullParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    /// Additive floor of the positivity transform.
    pub theta_floor: f64,
    /// Initial `(scale, shape)` the output bias is set to reproduce, when present.
    pub initial_theta: Option<[f64; 2]>,
    /// Multipliers `s` in `theta = s * softplus(u) + floor`.
    #[serde(default = "unit_scale")]
    pub output_scale: [f64; 2],
}

fn unit_scale() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 420,
            hidden_dims: vec![400, 100],
            dropout_rate: 0.10,
            theta_floor: 1e-3,
            initial_theta: None,
            output_scale: unit_scale(),
        }
    }
}

pub const OUTPUT_DIM: usize = 2;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer widths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.theta_floor >= 0.0 && self.theta_floor.is_finite()) {
            return Err(Error::InvalidParameter("theta floor must be >= 0".into()));
        }
        if self
            .output_scale
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidParameter(
                "output scale must be positive".into(),
            ));
        }
        if let Some(t) = self.initial_theta {
            if t.iter().any(|v| !(v.is_finite() && *v > self.theta_floor)) {
                return Err(Error::InvalidParameter(
                    "initial theta must exceed the floor".into(),
                ));
            }
        }
        Ok(())
    }

    /// `(in, out)` of every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(OUTPUT_DIM);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = dot(row, input) + b;
        }
    }
}

/// Weights and biases of every affine layer. Also used for gradients and
/// optimizer moments, which share the shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            layers: config
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    /// When the config names an initial theta, the output bias is set to the
    /// inverse softplus of it.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = derived_rng(seed, &[tag::INIT]);
        let mut params = Self::zeros(config);
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        if let Some(theta) = config.initial_theta {
            let out = params.layers.last_mut().expect("at least one layer");
            for ((b, t), s) in out.bias.iter_mut().zip(theta).zip(config.output_scale) {
                *b = inverse_softplus((t - config.theta_floor) / s);
            }
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &MlpParams, alpha: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn fill(&mut self, value: f64) {
        for a in self.iter_mut() {
            *a = value;
        }
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    pub fn matches_config(&self, config: &ModelConfig) -> bool {
        let shapes = config.layer_shapes();
        self.layers.len() == shapes.len()
            && self.layers.iter().zip(shapes).all(|(l, (i, o))| {
                l.in_dim == i && l.out_dim == o && l.weights.len() == i * o && l.bias.len() == o
            })
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn inverse_softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp_m1().ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values of one forward pass, consumed by backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activation of every hidden layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation (after ReLU and dropout) of every hidden layer.
    pub post: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden layer: `0` or `1/(1-p)`. Empty in eval mode.
    pub masks: Vec<Vec<f64>>,
    pub raw: [f64; 2],
    pub output_scale: [f64; 2],
    pub theta: WeibullParams,
}

fn transform(raw: [f64; 2], scale: [f64; 2], floor: f64) -> Result<WeibullParams> {
    WeibullParams::new(
        scale[0] * softplus(raw[0]) + floor,
        scale[1] * softplus(raw[1]) + floor,
    )
}

/// Forward pass. Train mode draws inverted-dropout masks from `rng`.
pub fn forward<R: Rng + ?Sized>(
    x: &[f64],
    params: &MlpParams,
    config: &ModelConfig,
    mode: Mode,
    mut rng: Option<&mut R>,
) -> Result<(WeibullParams, ForwardTrace)> {
    if x.len() != config.input_dim || !params.matches_config(config) {
        return Err(Error::ShapeMismatch(format!(
            "input of length {} for a model expecting {}",
            x.len(),
            config.input_dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivation { layer: 0 });
    }
    let use_dropout = mode == Mode::Train && config.dropout_rate > 0.0;
    if use_dropout && rng.is_none() {
        return Err(Error::InvalidParameter(
            "train mode with dropout requires a generator".into(),
        ));
    }
    let keep = 1.0 - config.dropout_rate;
    let scale = 1.0 / keep;
    let n_hidden = params.layers.len() - 1;
    let mut pre = Vec::with_capacity(n_hidden);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_hidden);
    let mut masks = Vec::with_capacity(if use_dropout { n_hidden } else { 0 });
    for (li, layer) in params.layers[..n_hidden].iter().enumerate() {
        let input = if li == 0 { x } else { &post[li - 1] };
        let mut z = vec![0.0; layer.out_dim];
        layer.apply(input, &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: li + 1 });
        }
        let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        if use_dropout {
            let r = rng.as_mut().expect("checked above");
            let mask: Vec<f64> = (0..a.len())
                .map(|_| if r.random::<f64>() < keep { scale } else { 0.0 })
                .collect();
            for (v, m) in a.iter_mut().zip(&mask) {
                *v *= m;
            }
            masks.push(mask);
        }
        pre.push(z);
        post.push(a);
    }
    let last = &params.layers[n_hidden];
    let mut raw = [0.0; 2];
    let input = if n_hidden == 0 {
        x
    } else {
        &post[n_hidden - 1]
    };
    last.apply(input, &mut raw);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivation {
            layer: n_hidden + 1,
        });
    }
    let theta = transform(raw, config.output_scale, config.theta_floor)?;
    Ok((
        theta,
        ForwardTrace {
            input: x.to_vec(),
            pre,
            post,
            masks,
            raw,
            output_scale: config.output_scale,
            theta,
        },
    ))
}

/// Eval-mode prediction without keeping a trace.
pub fn predict(x: &[f64], params: &MlpParams, config: &ModelConfig) -> Result<WeibullParams> {
    forward::<rand_chacha::ChaCha8Rng>(x, params, config, Mode::Eval, None).map(|(t, _)| t)
}

/// Accumulate `scale * (dL/dtheta)^T dtheta/domega` into `acc`.
pub fn backprop_into(
    trace: &ForwardTrace,
    dl_dtheta: [f64; 2],
    params: &MlpParams,
    acc: &mut MlpParams,
    scale: f64,
) -> Result<()> {
    let n_hidden = params.layers.len() - 1;
    if trace.pre.len() != n_hidden || !acc.same_shape(params) {
        return Err(Error::ShapeMismatch(
            "trace or gradient buffer does not match the parameters".into(),
        ));
    }
    // dtheta/du = s * sigmoid(u)
    let mut delta: Vec<f64> = trace
        .raw
        .iter()
        .zip(dl_dtheta)
        .zip(trace.output_scale)
        .map(|((u, g), s)| scale * g * s * sigmoid(*u))
        .collect();
    for li in (0..=n_hidden).rev() {
        let layer = &params.layers[li];
        let input: &[f64] = if li == 0 {
            &trace.input
        } else {
            &trace.post[li - 1]
        };
        if input.len() != layer.in_dim || delta.len() != layer.out_dim {
            return Err(Error::ShapeMismatch(format!("layer {li} trace width")));
        }
        let grad = &mut acc.layers[li];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            grad.bias[o] += d;
            let row = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (g, x) in row.iter_mut().zip(input) {
                *g += d * x;
            }
        }
        if li == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.in_dim];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        let z = &trace.pre[li - 1];
        for (j, p) in prev.iter_mut().enumerate() {
            let mut g = if z[j] > 0.0 { *p } else { 0.0 };
            if let Some(mask) = trace.masks.get(li - 1) {
                g *= mask[j];
            }
            *p = g;
        }
        delta = prev;
    }
    Ok(())
}

/// `(dL/dtheta)^T dtheta/domega` as a fresh gradient.
pub fn backprop_output_grad(
    trace: &ForwardTrace,
    dl_dtheta: [f64; 2],
    params: &MlpParams,
) -> Result<MlpParams> {
    let mut acc = params.zeros_like();
    backprop_into(trace, dl_dtheta, params, &mut acc, 1.0)?;
    Ok(acc)
}

/// Add the gradient of `lambda_reg * ||omega||_2` to `grads` and return the
/// penalty value. At `omega = 0` the zero subgradient is used.
pub fn add_l2_penalty(params: &MlpParams, lambda_reg: f64, grads: &mut MlpParams) -> f64 {
    if lambda_reg == 0.0 {
        return 0.0;
    }
    let norm = params.l2_norm();
    if norm > 0.0 {
        grads.add_scaled(params, lambda_reg / norm);
    }
    lambda_reg * norm
}

/// NLL of `y` under the discretized prediction for `x` plus the L2 penalty,
/// with its exact gradient with respect to every weight.
#[allow(clippy::too_many_arguments)]
pub fn nll_loss_and_grad<R: Rng + ?Sized>(
    x: &[f64],
    y: u32,
    params: &MlpParams,
    config: &ModelConfig,
    discretizer: &WeibullDiscretizer,
    lambda_reg: f64,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<(f64, MlpParams)> {
    let (theta, trace) = forward(x, params, config, mode, rng)?;
    let (nll, dtheta) = discretizer.nll_with_grad(theta, y)?;
    let mut grads = backprop_output_grad(&trace, dtheta, params)?;
    let penalty = add_l2_penalty(params, lambda_reg, &mut grads);
    Ok((nll + penalty, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(like: &MlpParams) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::ShapeMismatch("Adam operands differ in shape".into()));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

const MAGIC: &[u8; 8] = b"IEOPDMCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    seed: u64,
    step: u64,
    layers: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: MlpParams,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            seed: self.seed,
            step: self.step,
            layers: self
                .params
                .layers
                .iter()
                .map(|l| [l.out_dim, l.in_dim])
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for v in self.params.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        let mut params = MlpParams::zeros(&header.config);
        let shapes: Vec<[usize; 2]> = params
            .layers
            .iter()
            .map(|l| [l.out_dim, l.in_dim])
            .collect();
        if shapes != header.layers {
            return Err(Error::Checkpoint(
                "layer shapes disagree with config".into(),
            ));
        }
        let mut buf = [0u8; 8];
        for v in params.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Self {
            config: header.config,
            params,
            seed: header.seed,
            step: header.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::rul_dist::{DensityAnchor, RulSupport};
    use approx::assert_relative_eq;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            hidden_dims: vec![8, 4],
            dropout_rate: 0.0,
            theta_floor: 1e-3,
            initial_theta: None,
            output_scale: [1.0, 1.0],
        }
    }

    #[test]
    fn zero_network_outputs_softplus_zero() {
        let config = ModelConfig::default();
        let params = MlpParams::zeros(&config);
        let theta = predict(&vec![0.3; 420], &params, &config).unwrap();
        let expected = 2f64.ln() + 1e-3;
        assert_relative_eq!(theta.scale(), expected, epsilon = 1e-15);
        assert_relative_eq!(theta.shape(), expected, epsilon = 1e-15);
        assert_eq!(
            params.num_params(),
            420 * 400 + 400 + 400 * 100 + 100 + 100 * 2 + 2
        );
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let config = tiny_config();
        let params = MlpParams::init(&config, 3).unwrap();
        let x = [0.1, -0.4, 0.9, 0.3, 0.0, 1.2];
        let mut rng = rng_from_seed(1);
        let (a, _) = forward(&x, &params, &config, Mode::Train, Some(&mut rng)).unwrap();
        let b = predict(&x, &params, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_is_seed_deterministic() {
        let config = ModelConfig {
            dropout_rate: 0.5,
            ..tiny_config()
        };
        let params = MlpParams::init(&config, 3).unwrap();
        let x = [0.1, -0.4, 0.9, 0.3, 0.0, 1.2];
        let (a, ta) = forward(
            &x,
            &params,
            &config,
            Mode::Train,
            Some(&mut rng_from_seed(9)),
        )
        .unwrap();
        let (b, tb) = forward(
            &x,
            &params,
            &config,
            Mode::Train,
            Some(&mut rng_from_seed(9)),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.masks, tb.masks);
        for m in ta.masks.iter().flatten() {
            assert!(*m == 0.0 || (*m - 2.0).abs() < 1e-15);
        }
        assert!(forward::<crate::rng::SeededRng>(&x, &params, &config, Mode::Train, None).is_err());
    }

    #[test]
    fn positivity_for_extreme_weights() {
        let config = tiny_config();
        let mut params = MlpParams::init(&config, 4).unwrap();
        params.scale(-50.0);
        let theta = predict(&[5.0; 6], &params, &config).unwrap();
        assert!(theta.scale() > 0.0 && theta.shape() > 0.0);
    }

    #[test]
    fn initial_theta_sets_output_bias() {
        let config = ModelConfig {
            initial_theta: Some([80.0, 3.0]),
            output_scale: [25.0, 1.5],
            ..tiny_config()
        };
        let mut params = MlpParams::init(&config, 4).unwrap();
        let last = params.layers.len() - 1;
        params.layers[last].weights.fill(0.0);
        let theta = predict(&[0.5; 6], &params, &config).unwrap();
        assert_relative_eq!(theta.scale(), 80.0, epsilon = 1e-9);
        assert_relative_eq!(theta.shape(), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let config = tiny_config();
        let params = MlpParams::init(&config, 5).unwrap();
        let (_, trace) =
            forward::<crate::rng::SeededRng>(&[0.2; 6], &params, &config, Mode::Eval, None)
                .unwrap();
        let g = backprop_output_grad(&trace, [0.0, 0.0], &params).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        let config = ModelConfig {
            output_scale: [7.0, 0.5],
            ..tiny_config()
        };
        let params = MlpParams::init(&config, 6).unwrap();
        let x = [0.3, -0.2, 0.8, 0.5, -0.9, 0.1];
        let (_, trace) =
            forward::<crate::rng::SeededRng>(&x, &params, &config, Mode::Eval, None).unwrap();
        for out in 0..2 {
            let mut dir = [0.0; 2];
            dir[out] = 1.0;
            let g = backprop_output_grad(&trace, dir, &params).unwrap();
            let analytic: Vec<f64> = g.iter().copied().collect();
            let n = params.num_params();
            for idx in (0..n).step_by(7) {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    *p.iter_mut().nth(idx).unwrap() += delta;
                    predict(&x, &p, &config).unwrap().as_array()[out]
                };
                let h = 1e-6;
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!(
                    (fd - analytic[idx]).abs() <= 1e-6 * fd.abs().max(1.0),
                    "param {idx}: {fd} vs {}",
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn nll_grad_composes_with_output_backprop() {
        let config = tiny_config();
        let params = MlpParams::init(&config, 8).unwrap();
        let disc =
            WeibullDiscretizer::new(RulSupport::new(20).unwrap(), DensityAnchor::LeftEndpoint);
        let x = [0.3, -0.2, 0.8, 0.5, -0.9, 0.1];
        let (_, grads) = nll_loss_and_grad::<crate::rng::SeededRng>(
            &x,
            2,
            &params,
            &config,
            &disc,
            0.0,
            Mode::Eval,
            None,
        )
        .unwrap();
        let (theta, trace) =
            forward::<crate::rng::SeededRng>(&x, &params, &config, Mode::Eval, None).unwrap();
        let (_, dtheta) = disc.nll_with_grad(theta, 2).unwrap();
        let composed = backprop_output_grad(&trace, dtheta, &params).unwrap();
        assert_eq!(grads, composed);
    }

    #[test]
    fn l2_penalty_value_and_gradient() {
        let config = tiny_config();
        let params = MlpParams::init(&config, 10).unwrap();
        let disc =
            WeibullDiscretizer::new(RulSupport::new(20).unwrap(), DensityAnchor::LeftEndpoint);
        let x = [0.3, -0.2, 0.8, 0.5, -0.9, 0.1];
        let lambda = 0.37;
        let (l0, g0) = nll_loss_and_grad::<crate::rng::SeededRng>(
            &x,
            3,
            &params,
            &config,
            &disc,
            0.0,
            Mode::Eval,
            None,
        )
        .unwrap();
        let (l1, g1) = nll_loss_and_grad::<crate::rng::SeededRng>(
            &x,
            3,
            &params,
            &config,
            &disc,
            lambda,
            Mode::Eval,
            None,
        )
        .unwrap();
        let norm = params.l2_norm();
        assert_relative_eq!(l1 - l0, lambda * norm, epsilon = 1e-12);
        for ((a, b), w) in g1.iter().zip(g0.iter()).zip(params.iter()) {
            assert_relative_eq!(a - b, lambda * w / norm, epsilon = 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let config = tiny_config();
        let mut params = MlpParams::init(&config, 1).unwrap();
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let zeros = params.zeros_like();
        adam_step(&mut params, &zeros, &mut state, 0.1).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_single_step_reference() {
        // Hand-rolled: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1,
        // update = -0.1 * 1 / (1 + 1e-8).
        let config = ModelConfig {
            input_dim: 1,
            hidden_dims: vec![],
            ..tiny_config()
        };
        let mut params = MlpParams::zeros(&config);
        let mut grads = params.zeros_like();
        grads.fill(1.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.1).unwrap();
        let m = 0.1;
        let v = 0.001;
        let m_hat = m / (1.0 - 0.9);
        let v_hat = v / (1.0 - 0.999f64);
        let expected = -0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        for p in params.iter() {
            assert_relative_eq!(*p, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let config = ModelConfig {
            input_dim: 1,
            hidden_dims: vec![],
            ..tiny_config()
        };
        let mut params = MlpParams::zeros(&config);
        let mut grads = params.zeros_like();
        grads.fill(-2.5);
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
        }
        for p in params.iter() {
            assert!((*p - 1.0).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let config = tiny_config();
        let params = MlpParams::init(&config, 12).unwrap();
        let ck = Checkpoint {
            config,
            params,
            seed: 12,
            step: 300,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"IEOPDMCK");
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        buf[0] = b'X';
        assert!(Checkpoint::read_from(buf.as_slice()).is_err());
    }
}
