//! Layer primitives, forward/backward passes, softmax cross-entropy, an
//! end-to-end gradient checker, and flat binary weight serialization.
//!
//! Layer blocks follow the canonical Dense → BatchNorm → Activation order.
//! BatchNorm uses biased in-batch variance, epsilon 1e-5 and momentum-0.9
//! running statistics. Dropout is inverted (survivors scaled by 1/(1-rate)
//! at train time) so inference is the identity map.

use std::io::{Read, Write};
use std::path::Path;

use crate::activations::ActivationSpec;
use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Matrix, Rng};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Execution mode. Train keeps caches and applies stochastic layers;
/// Infer is a pure function of the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Topology of one layer, without parameter state.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    BatchNorm { features: usize },
    Dropout { rate: f64 },
    Activation(ActivationSpec),
}

/// An ordered layer list. `validate` checks Dense dims chain and dropout
/// rates are < 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_out: Option<usize> = None;
        for layer in &self.layers {
            match layer {
                LayerSpec::Dense { input, output } => {
                    if *input == 0 || *output == 0 {
                        return Err(Error::Config("dense layer with zero dim".into()));
                    }
                    if let Some(out) = prev_out {
                        if out != *input {
                            return Err(Error::Config(format!(
                                "dense chain broken: previous output {out}, next input {input}"
                            )));
                        }
                    }
                    prev_out = Some(*output);
                }
                LayerSpec::BatchNorm { features } => {
                    if let Some(out) = prev_out {
                        if out != *features {
                            return Err(Error::Config(format!(
                                "batchnorm features {features} do not match width {out}"
                            )));
                        }
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
                    }
                }
                LayerSpec::Activation(_) => {}
            }
        }
        Ok(())
    }
}

/// One layer with its parameter state.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense {
        /// (input, output), so the forward pass is `x·W + b`.
        w: Matrix,
        b: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta_shift: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Dropout {
        rate: f64,
    },
    Activation(ActivationSpec),
}

/// A minibatch: inputs (batch × features) and integer class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

/// Per-layer forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense { x: Matrix },
    BatchNorm(BnCache),
    Dropout { mask: Matrix },
    Activation { z: Matrix },
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Matrix,
    pub inv_std: Vec<f64>,
}

/// Parameter gradients, aligned with the network's layer list.
#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { dw: Matrix, db: Vec<f64> },
    BatchNorm { dgamma: Vec<f64>, dbeta_shift: Vec<f64> },
    None,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<LayerGrads>,
}

impl Gradients {
    /// Flat view: (name, slice) per trainable tensor, in layer order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, g) in self.per_layer.iter().enumerate() {
            match g {
                LayerGrads::Dense { dw, db } => {
                    out.push((format!("layer{i}.w"), dw.data()));
                    out.push((format!("layer{i}.b"), db.as_slice()));
                }
                LayerGrads::BatchNorm { dgamma, dbeta_shift } => {
                    out.push((format!("layer{i}.gamma"), dgamma.as_slice()));
                    out.push((format!("layer{i}.beta_shift"), dbeta_shift.as_slice()));
                }
                LayerGrads::None => {}
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Layer-level operations
// ---------------------------------------------------------------------------

/// Affine layer forward: `x·W + b`, bias broadcast over rows.
pub fn dense_forward(w: &Matrix, b: &[f64], x: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() {
        return Err(Error::Shape {
            op: "dense_forward",
            lhs: format!("{}x{}", x.rows(), x.cols()),
            rhs: format!("{}x{}", w.rows(), w.cols()),
        });
    }
    let mut y = x.matmul(w)?;
    let cols = y.cols();
    for i in 0..y.rows() {
        for j in 0..cols {
            let v = y.get(i, j) + b[j];
            y.set(i, j, v);
        }
    }
    Ok(y)
}

/// Affine layer backward: `dW = xᵀ·g`, `db = column-sum(g)`, `dx = g·Wᵀ`.
pub fn dense_backward(x: &Matrix, w: &Matrix, g: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let dw = x.transpose().matmul(g)?;
    let db = g.col_sums();
    let dx = g.matmul(&w.transpose())?;
    Ok((dw, db, dx))
}

/// BatchNorm train-mode forward: normalize per feature by biased batch
/// statistics, scale by gamma, shift by beta_shift. Returns the output,
/// the backward cache, and the batch (mean, var) so the caller can update
/// running statistics.
pub fn batchnorm_forward_train(
    gamma: &[f64],
    beta_shift: &[f64],
    x: &Matrix,
) -> Result<(Matrix, BnCache, Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Domain(format!(
            "batchnorm train mode needs batch_size >= 2, got {n}"
        )));
    }
    let f = x.cols();
    let mut mean = vec![0.0; f];
    let mut var = vec![0.0; f];
    for j in 0..f {
        let mut s = 0.0;
        for i in 0..n {
            s += x.get(i, j);
        }
        mean[j] = s / n as f64;
        let mut v = 0.0;
        for i in 0..n {
            let d = x.get(i, j) - mean[j];
            v += d * d;
        }
        var[j] = v / n as f64; // biased variance
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let x_hat = Matrix::from_fn(n, f, |i, j| (x.get(i, j) - mean[j]) * inv_std[j]);
    let y = Matrix::from_fn(n, f, |i, j| gamma[j] * x_hat.get(i, j) + beta_shift[j]);
    Ok((y, BnCache { x_hat, inv_std }, mean, var))
}

/// BatchNorm inference forward using running statistics.
pub fn batchnorm_forward_infer(
    gamma: &[f64],
    beta_shift: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    x: &Matrix,
) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let x_hat = (x.get(i, j) - running_mean[j]) / (running_var[j] + BN_EPSILON).sqrt();
        gamma[j] * x_hat + beta_shift[j]
    })
}

/// Exact gradients of the normalize-scale-shift composition.
pub fn batchnorm_backward(
    cache: &BnCache,
    gamma: &[f64],
    g: &Matrix,
) -> (Vec<f64>, Vec<f64>, Matrix) {
    let n = g.rows();
    let f = g.cols();
    let x_hat = &cache.x_hat;
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    let mut sum_dxhat = vec![0.0; f];
    let mut sum_dxhat_xhat = vec![0.0; f];
    for i in 0..n {
        for j in 0..f {
            let gij = g.get(i, j);
            dgamma[j] += gij * x_hat.get(i, j);
            dbeta[j] += gij;
            let dxhat = gij * gamma[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * x_hat.get(i, j);
        }
    }
    let nf = n as f64;
    let dx = Matrix::from_fn(n, f, |i, j| {
        let dxhat = g.get(i, j) * gamma[j];
        cache.inv_std[j] / nf * (nf * dxhat - sum_dxhat[j] - x_hat.get(i, j) * sum_dxhat_xhat[j])
    });
    (dgamma, dbeta, dx)
}

/// Inverted dropout. Train: zero each entry with probability `rate` and
/// scale survivors by `1/(1-rate)`; Infer: identity. The returned mask
/// holds the applied per-entry scale, so backward is `g ⊙ mask`.
pub fn dropout_forward(
    rate: f64,
    x: &Matrix,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Matrix, Matrix)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("dropout rate {rate} not in [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), Matrix::from_fn(x.rows(), x.cols(), |_, _| 1.0)));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.next_f64() < rate {
            0.0
        } else {
            keep_scale
        }
    });
    Ok((x.hadamard(&mask), mask))
}

/// Fused softmax cross-entropy: mean negative log-likelihood over the batch
/// (max-subtraction stabilized) and its gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    let k = logits.cols();
    if labels.len() != n {
        return Err(Error::Shape {
            op: "softmax_cross_entropy",
            lhs: format!("{n} rows"),
            rhs: format!("{} labels", labels.len()),
        });
    }
    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(n, k);
    for i in 0..n {
        let label = labels[i];
        if label >= k {
            return Err(Error::Domain(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in row {
            denom += (z - m).exp();
        }
        let log_denom = denom.ln();
        loss += -(row[label] - m - log_denom);
        for j in 0..k {
            let p = (row[j] - m).exp() / denom;
            let y = if j == label { 1.0 } else { 0.0 };
            dlogits.set(i, j, (p - y) / n as f64);
        }
    }
    Ok((loss / n as f64, dlogits))
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// A stack of layers with parameter state.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub mode: Mode,
}

impl Network {
    /// Instantiates parameters for a topology: Glorot uniform dense weights,
    /// zero biases, unit gamma / zero shift / unit running variance for BN.
    pub fn init(spec: &NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for ls in &spec.layers {
            layers.push(match ls {
                LayerSpec::Dense { input, output } => Layer::Dense {
                    w: glorot_uniform(*input, *output, rng)?,
                    b: vec![0.0; *output],
                },
                LayerSpec::BatchNorm { features } => Layer::BatchNorm {
                    gamma: vec![1.0; *features],
                    beta_shift: vec![0.0; *features],
                    running_mean: vec![0.0; *features],
                    running_var: vec![1.0; *features],
                },
                LayerSpec::Dropout { rate } => Layer::Dropout { rate: *rate },
                LayerSpec::Activation(a) => Layer::Activation(*a),
            });
        }
        Ok(Network {
            layers,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Sequential forward pass. In Train mode, returns per-layer caches and
    /// updates BatchNorm running statistics; `rng` drives dropout masks.
    pub fn forward(&mut self, x: &Matrix, rng: &mut Rng) -> Result<(Matrix, Vec<LayerCache>)> {
        let mode = self.mode;
        let mut cur = x.clone();
        let mut caches = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { w, b } => {
                    let y = dense_forward(w, b, &cur)?;
                    if mode == Mode::Train {
                        caches.push(LayerCache::Dense { x: cur });
                    }
                    cur = y;
                }
                Layer::BatchNorm {
                    gamma,
                    beta_shift,
                    running_mean,
                    running_var,
                } => {
                    if mode == Mode::Train {
                        let (y, cache, mean, var) =
                            batchnorm_forward_train(gamma, beta_shift, &cur)?;
                        for j in 0..mean.len() {
                            running_mean[j] =
                                BN_MOMENTUM * running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                            running_var[j] =
                                BN_MOMENTUM * running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
                        }
                        caches.push(LayerCache::BatchNorm(cache));
                        cur = y;
                    } else {
                        cur = batchnorm_forward_infer(
                            gamma,
                            beta_shift,
                            running_mean,
                            running_var,
                            &cur,
                        );
                    }
                }
                Layer::Dropout { rate } => {
                    let (y, mask) = dropout_forward(*rate, &cur, rng, mode)?;
                    if mode == Mode::Train {
                        caches.push(LayerCache::Dropout { mask });
                    }
                    cur = y;
                }
                Layer::Activation(spec) => {
                    let y = spec.forward(&cur)?;
                    if mode == Mode::Train {
                        caches.push(LayerCache::Activation { z: cur });
                    }
                    cur = y;
                }
            }
        }
        Ok((cur, caches))
    }

    /// Inference-mode forward over an immutable parameter snapshot.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense { w, b } => dense_forward(w, b, &cur)?,
                Layer::BatchNorm {
                    gamma,
                    beta_shift,
                    running_mean,
                    running_var,
                } => batchnorm_forward_infer(gamma, beta_shift, running_mean, running_var, &cur),
                Layer::Dropout { .. } => cur,
                Layer::Activation(spec) => spec.forward(&cur)?,
            };
        }
        Ok(cur)
    }

    /// Reverse-order chain rule from the loss gradient. `caches` must come
    /// from a Train-mode forward on the same input.
    pub fn backward(&self, caches: &[LayerCache], dloss: &Matrix) -> Result<Gradients> {
        let n_cached = self.layers.len();
        if caches.len() != n_cached {
            return Err(Error::Usage(format!(
                "cache/topology mismatch: {} caches for {} layers",
                caches.len(),
                n_cached
            )));
        }
        let mut per_layer = vec![LayerGrads::None; self.layers.len()];
        let mut g = dloss.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match (layer, &caches[i]) {
                (Layer::Dense { w, .. }, LayerCache::Dense { x }) => {
                    let (dw, db, dx) = dense_backward(x, w, &g)?;
                    per_layer[i] = LayerGrads::Dense { dw, db };
                    g = dx;
                }
                (Layer::BatchNorm { gamma, .. }, LayerCache::BatchNorm(cache)) => {
                    let (dgamma, dbeta_shift, dx) = batchnorm_backward(cache, gamma, &g);
                    per_layer[i] = LayerGrads::BatchNorm { dgamma, dbeta_shift };
                    g = dx;
                }
                (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    g = g.hadamard(mask);
                }
                (Layer::Activation(spec), LayerCache::Activation { z }) => {
                    g = g.hadamard(&spec.grad(z)?);
                }
                _ => {
                    return Err(Error::Usage(format!(
                        "stale or mismatched cache at layer {i}"
                    )))
                }
            }
        }
        Ok(Gradients { per_layer })
    }

    /// Mutable flat view of every trainable tensor, in layer order. Aligned
    /// with [`Gradients::tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense { w, b } => {
                    out.push((format!("layer{i}.w"), w.data_mut()));
                    out.push((format!("layer{i}.b"), b.as_mut_slice()));
                }
                Layer::BatchNorm {
                    gamma, beta_shift, ..
                } => {
                    out.push((format!("layer{i}.gamma"), gamma.as_mut_slice()));
                    out.push((format!("layer{i}.beta_shift"), beta_shift.as_mut_slice()));
                }
                _ => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            match layer {
                Layer::Dense { w, b } => n += w.data().len() + b.len(),
                Layer::BatchNorm { gamma, beta_shift, .. } => n += gamma.len() + beta_shift.len(),
                _ => {}
            }
        }
        n
    }

    /// One-line-per-layer topology dump for the CLI.
    pub fn topology(&self) -> String {
        let mut out = String::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let line = match layer {
                Layer::Dense { w, .. } => format!("dense {}x{}", w.rows(), w.cols()),
                Layer::BatchNorm { gamma, .. } => format!("batchnorm {}", gamma.len()),
                Layer::Dropout { rate } => format!("dropout {rate}"),
                Layer::Activation(spec) => format!("activation {spec}"),
            };
            out.push_str(&format!("  [{i}] {line}\n"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------

/// End-to-end finite-difference check of every analytic gradient path.
///
/// Samples at least 200 parameters (all of them for small nets), compares
/// analytic gradients to central differences of the loss, and returns the
/// worst relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
/// Dropout is frozen by reseeding the mask RNG identically per evaluation;
/// if two forward passes still disagree the loss is non-deterministic in
/// the parameters and a usage error is returned.
pub fn grad_check(net: &mut Network, batch: &Batch, h: f64, seed: u64) -> Result<f64> {
    net.set_mode(Mode::Train);

    fn loss_of(net: &mut Network, batch: &Batch, seed: u64) -> Result<f64> {
        let mut rng = Rng::new(seed);
        let (logits, _) = net.forward(&batch.inputs, &mut rng)?;
        let (loss, _) = softmax_cross_entropy(&logits, &batch.labels)?;
        Ok(loss)
    }

    let l0 = loss_of(net, batch, seed)?;
    let l1 = loss_of(net, batch, seed)?;
    if l0 != l1 {
        return Err(Error::Usage(
            "loss is non-deterministic in the parameters; freeze dropout first".into(),
        ));
    }

    // Analytic gradients at the base point.
    let analytic = {
        let mut rng = Rng::new(seed);
        let (logits, caches) = net.forward(&batch.inputs, &mut rng)?;
        let (_, dlogits) = softmax_cross_entropy(&logits, &batch.labels)?;
        net.backward(&caches, &dlogits)?
    };
    let flat_analytic: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|(_, g)| g.to_vec())
        .collect();

    // Pick the parameter sample up front so the borrow of the net's
    // parameters does not overlap the loss evaluations.
    let sizes: Vec<usize> = net
        .param_tensors_mut()
        .iter()
        .map(|(_, p)| p.len())
        .collect();
    let total: usize = sizes.iter().sum();
    let sample_size = 200.min(total);
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(sample_size);
    let mut pick_rng = Rng::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    if total <= sample_size {
        for (t, &len) in sizes.iter().enumerate() {
            for e in 0..len {
                picks.push((t, e));
            }
        }
    } else {
        for _ in 0..sample_size {
            let mut flat = pick_rng.below(total);
            let mut t = 0;
            while flat >= sizes[t] {
                flat -= sizes[t];
                t += 1;
            }
            picks.push((t, flat));
        }
    }

    let mut worst = 0.0_f64;
    for (t, e) in picks {
        let orig = net.param_tensors_mut()[t].1[e];
        net.param_tensors_mut()[t].1[e] = orig + h;
        let lp = loss_of(net, batch, seed)?;
        net.param_tensors_mut()[t].1[e] = orig - h;
        let lm = loss_of(net, batch, seed)?;
        net.param_tensors_mut()[t].1[e] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let a = flat_analytic[t][e];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Weight serialization
// ---------------------------------------------------------------------------

const WEIGHTS_MAGIC: &[u8; 8] = b"ESWNET1\0";

const TAG_DENSE: u32 = 0;
const TAG_BATCHNORM: u32 = 1;
const TAG_DROPOUT: u32 = 2;
const TAG_ACTIVATION: u32 = 3;

fn activation_code(spec: &ActivationSpec) -> u32 {
    use crate::activations::ActivationKind::*;
    match spec.kind {
        EswishBeta => 0,
        Swish => 1,
        Relu => 2,
        Elu => 3,
        Softplus => 4,
        Sigmoid => 5,
        Tanh => 6,
        Identity => 7,
    }
}

fn activation_from_code(code: u32, beta: f64, alpha: f64) -> Result<ActivationSpec> {
    use crate::activations::ActivationKind::*;
    let kind = match code {
        0 => EswishBeta,
        1 => Swish,
        2 => Relu,
        3 => Elu,
        4 => Softplus,
        5 => Sigmoid,
        6 => Tanh,
        7 => Identity,
        other => return Err(Error::Config(format!("unknown activation code {other}"))),
    };
    Ok(ActivationSpec {
        kind,
        beta,
        elu_alpha: alpha,
    })
}

impl Network {
    /// Writes parameters to the flat binary format: magic `ESWNET1\0`,
    /// little-endian u32 layer count, per-layer tag and dims, then f64
    /// payloads in declaration order.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let push_f64s = |buf: &mut Vec<u8>, xs: &[f64]| {
            for x in xs {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        };
        for layer in &self.layers {
            match layer {
                Layer::Dense { w, b } => {
                    buf.extend_from_slice(&TAG_DENSE.to_le_bytes());
                    buf.extend_from_slice(&(w.rows() as u32).to_le_bytes());
                    buf.extend_from_slice(&(w.cols() as u32).to_le_bytes());
                    push_f64s(&mut buf, w.data());
                    push_f64s(&mut buf, b);
                }
                Layer::BatchNorm {
                    gamma,
                    beta_shift,
                    running_mean,
                    running_var,
                } => {
                    buf.extend_from_slice(&TAG_BATCHNORM.to_le_bytes());
                    buf.extend_from_slice(&(gamma.len() as u32).to_le_bytes());
                    push_f64s(&mut buf, gamma);
                    push_f64s(&mut buf, beta_shift);
                    push_f64s(&mut buf, running_mean);
                    push_f64s(&mut buf, running_var);
                }
                Layer::Dropout { rate } => {
                    buf.extend_from_slice(&TAG_DROPOUT.to_le_bytes());
                    push_f64s(&mut buf, &[*rate]);
                }
                Layer::Activation(spec) => {
                    buf.extend_from_slice(&TAG_ACTIVATION.to_le_bytes());
                    buf.extend_from_slice(&activation_code(spec).to_le_bytes());
                    push_f64s(&mut buf, &[spec.beta, spec.elu_alpha]);
                }
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a network (topology and parameters) written by `save_weights`.
    pub fn load_weights(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = Cursor::new(&bytes, path);
        let magic = cur.take(8)?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::Config(format!(
                "bad weights magic in {}",
                path.display()
            )));
        }
        let count = cur.u32()? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let tag = cur.u32()?;
            layers.push(match tag {
                TAG_DENSE => {
                    let rows = cur.u32()? as usize;
                    let cols = cur.u32()? as usize;
                    let w = Matrix::from_vec(rows, cols, cur.f64s(rows * cols)?)?;
                    let b = cur.f64s(cols)?;
                    Layer::Dense { w, b }
                }
                TAG_BATCHNORM => {
                    let f = cur.u32()? as usize;
                    Layer::BatchNorm {
                        gamma: cur.f64s(f)?,
                        beta_shift: cur.f64s(f)?,
                        running_mean: cur.f64s(f)?,
                        running_var: cur.f64s(f)?,
                    }
                }
                TAG_DROPOUT => Layer::Dropout {
                    rate: cur.f64s(1)?[0],
                },
                TAG_ACTIVATION => {
                    let code = cur.u32()?;
                    let vals = cur.f64s(2)?;
                    Layer::Activation(activation_from_code(code, vals[0], vals[1])?)
                }
                other => return Err(Error::Config(format!("unknown layer tag {other}"))),
            });
        }
        Ok(Network {
            layers,
            mode: Mode::Infer,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &Path) -> Self {
        Cursor {
            bytes,
            pos: 0,
            path: path.display().to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.clone(),
                expected: self.pos + n,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(8 * n)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;

    fn small_batch(rng: &mut Rng, n: usize, dim: usize, classes: usize) -> Batch {
        Batch {
            inputs: Matrix::from_fn(n, dim, |_, _| rng.uniform(-1.0, 1.0)),
            labels: (0..n).map(|i| i % classes).collect(),
        }
    }

    #[test]
    fn dense_forward_identity() {
        let w = Matrix::identity(3);
        let b = vec![0.0; 3];
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(dense_forward(&w, &b, &x).unwrap(), x);
    }

    #[test]
    fn dense_forward_hand_expanded() {
        let x = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let w = Matrix::from_vec(2, 1, vec![2.0, 3.0]).unwrap();
        let y = dense_forward(&w, &[0.5], &x).unwrap();
        assert_eq!(y.data(), &[5.5]);
    }

    #[test]
    fn dense_forward_batch_shape() {
        let mut rng = Rng::new(0);
        let x = Matrix::from_fn(64, 5, |_, _| rng.next_f64());
        let w = glorot_uniform(5, 3, &mut rng).unwrap();
        let y = dense_forward(&w, &[0.0; 3], &x).unwrap();
        assert_eq!(y.shape(), (64, 3));
    }

    #[test]
    fn dense_forward_shape_mismatch() {
        let x = Matrix::zeros(1, 3);
        let w = Matrix::zeros(2, 1);
        assert!(dense_forward(&w, &[0.0], &x).is_err());
    }

    #[test]
    fn dense_backward_zero_upstream() {
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        let g = Matrix::zeros(1, 1);
        let (dw, db, dx) = dense_backward(&x, &w, &g).unwrap();
        assert!(dw.data().iter().all(|&v| v == 0.0));
        assert!(db.iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_backward_scalar_chain() {
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let w = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let g = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let (dw, db, dx) = dense_backward(&x, &w, &g).unwrap();
        assert_eq!(dw.data(), &[2.0]);
        assert_eq!(db, vec![1.0]);
        assert_eq!(dx.data(), &[3.0]);
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let mut rng = Rng::new(11);
        let x = Matrix::from_fn(32, 4, |_, j| 3.0 * rng.normal() + j as f64);
        let gamma = vec![1.0; 4];
        let beta = vec![0.0; 4];
        let (y, _, _, _) = batchnorm_forward_train(&gamma, &beta, &x).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..32).map(|i| y.get(i, j)).sum::<f64>() / 32.0;
            let var: f64 = (0..32).map(|i| (y.get(i, j) - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn batchnorm_constant_column_outputs_zero() {
        let x = Matrix::from_fn(8, 2, |_, _| 5.0);
        let (y, _, _, _) = batchnorm_forward_train(&[1.0; 2], &[0.0; 2], &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batchnorm_rejects_batch_of_one_in_train() {
        let x = Matrix::zeros(1, 2);
        assert!(batchnorm_forward_train(&[1.0; 2], &[0.0; 2], &x).is_err());
    }

    #[test]
    fn batchnorm_infer_tracks_running_stats() {
        // Feed many batches from N(3, 4); after momentum averaging, Infer
        // output should be approximately standardized.
        let mut rng = Rng::new(5);
        let spec = NetworkSpec::new(vec![LayerSpec::BatchNorm { features: 1 }]).unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(0)).unwrap();
        for _ in 0..200 {
            let x = Matrix::from_fn(64, 1, |_, _| 3.0 + 2.0 * rng.normal());
            net.forward(&x, &mut Rng::new(0)).unwrap();
        }
        net.set_mode(Mode::Infer);
        let x = Matrix::from_fn(2000, 1, |_, _| 3.0 + 2.0 * rng.normal());
        let y = net.infer(&x).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / y.data().len() as f64;
        let var: f64 = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / y.data().len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn batchnorm_backward_gamma_grad_is_definitional() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_fn(16, 3, |_, _| rng.normal());
        let g = Matrix::from_fn(16, 3, |_, _| rng.normal());
        let (_, cache, _, _) = batchnorm_forward_train(&[1.0; 3], &[0.0; 3], &x).unwrap();
        let (dgamma, dbeta, _) = batchnorm_backward(&cache, &[1.0; 3], &g);
        for j in 0..3 {
            let expect: f64 = (0..16).map(|i| g.get(i, j) * cache.x_hat.get(i, j)).sum();
            assert!((dgamma[j] - expect).abs() < 1e-12);
            let expect_b: f64 = (0..16).map(|i| g.get(i, j)).sum();
            assert!((dbeta[j] - expect_b).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_backward_zero_upstream() {
        let mut rng = Rng::new(4);
        let x = Matrix::from_fn(8, 2, |_, _| rng.normal());
        let (_, cache, _, _) = batchnorm_forward_train(&[1.0; 2], &[0.0; 2], &x).unwrap();
        let (dgamma, dbeta, dx) = batchnorm_backward(&cache, &[1.0; 2], &Matrix::zeros(8, 2));
        assert!(dgamma.iter().chain(&dbeta).all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_rate_zero_and_infer_are_identity() {
        let mut rng = Rng::new(1);
        let x = Matrix::from_fn(4, 4, |_, _| rng.normal());
        let (y, mask) = dropout_forward(0.0, &x, &mut rng, Mode::Train).unwrap();
        assert_eq!(y, x);
        assert!(mask.data().iter().all(|&v| v == 1.0));
        let (y, _) = dropout_forward(0.7, &x, &mut rng, Mode::Infer).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_rate_one_rejected() {
        let x = Matrix::zeros(1, 1);
        assert!(dropout_forward(1.0, &x, &mut Rng::new(0), Mode::Train).is_err());
    }

    #[test]
    fn dropout_survivor_fraction_and_expectation() {
        let mut rng = Rng::new(77);
        let x = Matrix::from_fn(1000, 1000, |_, _| 1.0);
        let (y, _) = dropout_forward(0.2, &x, &mut rng, Mode::Train).unwrap();
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / 1e6;
        assert!((frac - 0.8).abs() < 0.005, "survivor fraction {frac}");
        let mean = y.data().iter().sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = Matrix::zeros(3, 7);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 6]).unwrap();
        assert!((loss - (7.0_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct() {
        let logits = Matrix::from_vec(1, 2, vec![10.0, -10.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        let expect = (-20.0_f64).exp().ln_1p();
        assert!((loss - expect).abs() < 1e-15);
        assert!(loss < 3e-9);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let logits = Matrix::zeros(1, 2);
        assert!(softmax_cross_entropy(&logits, &[2]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_difference() {
        let mut rng = Rng::new(9);
        let logits = Matrix::from_fn(4, 5, |_, _| rng.uniform(-2.0, 2.0));
        let labels = vec![0, 2, 4, 1];
        let (_, d) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..5 {
                let mut lp = logits.clone();
                lp.set(i, j, logits.get(i, j) + h);
                let mut lm = logits.clone();
                lm.set(i, j, logits.get(i, j) - h);
                let fp = softmax_cross_entropy(&lp, &labels).unwrap().0;
                let fm = softmax_cross_entropy(&lm, &labels).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!((d.get(i, j) - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn loss_decreases_with_logit_margin() {
        let mut prev = f64::INFINITY;
        for margin in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let logits = Matrix::from_vec(1, 2, vec![margin, 0.0]).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn empty_network_is_identity() {
        let mut net = Network::init(&NetworkSpec::default(), &mut Rng::new(0)).unwrap();
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = net.forward(&x, &mut Rng::new(0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dense_relu_composition() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 2, output: 2 },
            LayerSpec::Activation(ActivationSpec::relu()),
        ])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(1)).unwrap();
        let x = Matrix::from_vec(1, 2, vec![0.5, -0.5]).unwrap();
        let (y, _) = net.forward(&x, &mut Rng::new(0)).unwrap();
        let (w, b) = match &net.layers[0] {
            Layer::Dense { w, b } => (w.clone(), b.clone()),
            _ => unreachable!(),
        };
        let expect = dense_forward(&w, &b, &x).unwrap().map(|v| v.max(0.0));
        assert_eq!(y, expect);
    }

    #[test]
    fn infer_is_pure() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::BatchNorm { features: 4 },
            LayerSpec::Activation(ActivationSpec::eswish(1.5).unwrap()),
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { input: 4, output: 2 },
        ])
        .unwrap();
        let net = Network::init(&spec, &mut Rng::new(2)).unwrap();
        let mut rng = Rng::new(3);
        let x = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let a = net.infer(&x).unwrap();
        let b = net.infer(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_zero_dloss_gives_zero_grads() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 3, output: 3 },
            LayerSpec::Activation(ActivationSpec::swish()),
            LayerSpec::Dense { input: 3, output: 2 },
        ])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(4)).unwrap();
        let mut rng = Rng::new(0);
        let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let (y, caches) = net.forward(&x, &mut Rng::new(0)).unwrap();
        let grads = net
            .backward(&caches, &Matrix::zeros(y.rows(), y.cols()))
            .unwrap();
        for (_, g) in grads.tensors() {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_two_layer_matches_hand_composition() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 2, output: 3 },
            LayerSpec::Dense { input: 3, output: 2 },
        ])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(6)).unwrap();
        let mut rng = Rng::new(1);
        let x = Matrix::from_fn(3, 2, |_, _| rng.normal());
        let g_out = Matrix::from_fn(3, 2, |_, _| rng.normal());
        let (_, caches) = net.forward(&x, &mut Rng::new(0)).unwrap();
        let grads = net.backward(&caches, &g_out).unwrap();

        let (w0, w1) = match (&net.layers[0], &net.layers[1]) {
            (Layer::Dense { w: w0, .. }, Layer::Dense { w: w1, .. }) => (w0.clone(), w1.clone()),
            _ => unreachable!(),
        };
        let h = match &caches[1] {
            LayerCache::Dense { x } => x.clone(),
            _ => unreachable!(),
        };
        let (dw1, _, dh) = dense_backward(&h, &w1, &g_out).unwrap();
        let (dw0, _, _) = dense_backward(&x, &w0, &dh).unwrap();
        match (&grads.per_layer[0], &grads.per_layer[1]) {
            (LayerGrads::Dense { dw: a0, .. }, LayerGrads::Dense { dw: a1, .. }) => {
                assert_eq!(a0, &dw0);
                assert_eq!(a1, &dw1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn backward_cache_mismatch_is_usage_error() {
        let spec = NetworkSpec::new(vec![LayerSpec::Dense { input: 2, output: 2 }]).unwrap();
        let net = Network::init(&spec, &mut Rng::new(0)).unwrap();
        let err = net.backward(&[], &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    fn check_net(act: ActivationSpec) -> f64 {
        // 3 hidden layers with BN, dropout frozen by the grad_check seed.
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 6, output: 8 },
            LayerSpec::BatchNorm { features: 8 },
            LayerSpec::Activation(act),
            LayerSpec::Dense { input: 8, output: 8 },
            LayerSpec::Activation(act),
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { input: 8, output: 8 },
            LayerSpec::Activation(act),
            LayerSpec::Dense { input: 8, output: 4 },
        ])
        .unwrap();
        // Fixed seeds chosen so no sampled parameter has a near-zero
        // gradient (where finite-difference roundoff swamps the 1e-8
        // relative-error floor) and no ReLU unit sits within h of its kink.
        let mut net = Network::init(&spec, &mut Rng::new(97)).unwrap();
        let mut rng = Rng::new(98);
        let batch = small_batch(&mut rng, 8, 6, 4);
        grad_check(&mut net, &batch, 1e-5, 99).unwrap()
    }

    #[test]
    fn grad_check_eswish_network() {
        let err = check_net(ActivationSpec::eswish(1.5).unwrap());
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn grad_check_every_activation() {
        let mut specs = vec![
            ActivationSpec::relu(),
            ActivationSpec::swish(),
            ActivationSpec::new(ActivationKind::Elu),
            ActivationSpec::new(ActivationKind::Softplus),
            ActivationSpec::new(ActivationKind::Sigmoid),
            ActivationSpec::new(ActivationKind::Tanh),
        ];
        for beta in [1.0, 1.25, 1.5, 2.0] {
            specs.push(ActivationSpec::eswish(beta).unwrap());
        }
        for spec in specs {
            let err = check_net(spec);
            assert!(err < 1e-5, "{spec}: max relative error {err}");
        }
    }

    #[test]
    fn grad_check_error_shrinks_with_h() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 4, output: 6 },
            LayerSpec::Activation(ActivationSpec::eswish(1.5).unwrap()),
            LayerSpec::Dense { input: 6, output: 3 },
        ])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(8)).unwrap();
        let mut rng = Rng::new(9);
        let batch = small_batch(&mut rng, 6, 4, 3);
        let coarse = grad_check(&mut net, &batch, 1e-3, 7).unwrap();
        let fine = grad_check(&mut net, &batch, 1e-5, 7).unwrap();
        assert!(fine < coarse, "h=1e-5 ({fine}) not below h=1e-3 ({coarse})");
    }

    #[test]
    fn weights_round_trip() {
        let spec = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 3, output: 5 },
            LayerSpec::BatchNorm { features: 5 },
            LayerSpec::Activation(ActivationSpec::eswish(1.25).unwrap()),
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Dense { input: 5, output: 2 },
        ])
        .unwrap();
        let mut net = Network::init(&spec, &mut Rng::new(13)).unwrap();
        // Push a batch through so running stats are non-trivial.
        let mut rng = Rng::new(14);
        let x = Matrix::from_fn(8, 3, |_, _| rng.normal());
        net.forward(&x, &mut Rng::new(0)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        net.save_weights(&path).unwrap();
        let loaded = Network::load_weights(&path).unwrap();
        net.set_mode(Mode::Infer);
        assert_eq!(net.infer(&x).unwrap(), loaded.infer(&x).unwrap());

        // Truncated file is rejected.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            Network::load_weights(&path),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn spec_validation_catches_broken_chain() {
        let bad = NetworkSpec::new(vec![
            LayerSpec::Dense { input: 2, output: 3 },
            LayerSpec::Dense { input: 4, output: 2 },
        ]);
        assert!(bad.is_err());
        let bad = NetworkSpec::new(vec![LayerSpec::Dropout { rate: 1.0 }]);
        assert!(bad.is_err());
    }
}
