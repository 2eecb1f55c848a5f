//! The variational autoencoder: parameters, forward passes, the masked ELBO
//! loss, hand-derived gradients and the Adam optimizer.
//!
//! Encoder: `h = ReLU(w1·x + b1)`, `μ = w2·h + b2`,
//! `logvar = clamp(w3·h + b3, −10, 10)`.
//! Decoder: `x̂ = sigmoid(w5·ReLU(w4·z + b4) + b5)` with
//! `z = μ + exp(logvar/2) ⊙ ε`.
//!
//! Per-vector loss is `½ Σ_{mask} (x − x̂)² + ½ Σ (μ² + σ² − log σ² − 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SlotVector;
use crate::error::{Error, Result};
use crate::rng;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Names of the ten parameter blocks in storage order.
pub const BLOCK_NAMES: [&str; 10] = ["w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "w5", "b5"];

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x + bias`
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| bias[r] + dot(self.row(r), x))
            .collect()
    }

    /// `selfᵀ · g`
    pub fn transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                for (o, &w) in out.iter_mut().zip(self.row(r)) {
                    *o += gr * w;
                }
            }
        }
        out
    }

    /// `self += g ⊗ x`
    fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
                for (w, &xc) in row.iter_mut().zip(x) {
                    *w += gr * xc;
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Activation of the μ head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuActivation {
    #[default]
    Identity,
    /// ReLU on μ, the literal encoder form; kept for ablation runs.
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub mu_activation: MuActivation,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub w4: Matrix,
    pub b4: Vec<f64>,
    pub w5: Matrix,
    pub b5: Vec<f64>,
}

/// Gradient of the loss with respect to each [`VaeParams`] block.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub w4: Matrix,
    pub b4: Vec<f64>,
    pub w5: Matrix,
    pub b5: Vec<f64>,
}

macro_rules! blocks_impl {
    ($ty:ty) => {
        impl $ty {
            /// Blocks in [`BLOCK_NAMES`] order.
            pub fn blocks(&self) -> [&[f64]; 10] {
                [
                    &self.w1.data, &self.b1, &self.w2.data, &self.b2, &self.w3.data, &self.b3,
                    &self.w4.data, &self.b4, &self.w5.data, &self.b5,
                ]
            }

            pub fn blocks_mut(&mut self) -> [&mut [f64]; 10] {
                [
                    &mut self.w1.data, &mut self.b1, &mut self.w2.data, &mut self.b2,
                    &mut self.w3.data, &mut self.b3, &mut self.w4.data, &mut self.b4,
                    &mut self.w5.data, &mut self.b5,
                ]
            }
        }
    };
}

blocks_impl!(VaeParams);
blocks_impl!(VaeGradients);

impl VaeGradients {
    pub fn zeros_like(p: &VaeParams) -> Self {
        let (i, h, d) = (p.input_dim, p.hidden_dim, p.latent_dim);
        Self {
            w1: Matrix::zeros(h, i),
            b1: vec![0.0; h],
            w2: Matrix::zeros(d, h),
            b2: vec![0.0; d],
            w3: Matrix::zeros(d, h),
            b3: vec![0.0; d],
            w4: Matrix::zeros(h, d),
            b4: vec![0.0; h],
            w5: Matrix::zeros(i, h),
            b5: vec![0.0; i],
        }
    }

    pub fn add_assign(&mut self, other: &VaeGradients) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl VaeParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(input_dim: usize, hidden_dim: usize, latent_dim: usize) -> Self {
        let g = VaeGradients::zeros_like(&VaeParams {
            input_dim,
            hidden_dim,
            latent_dim,
            mu_activation: MuActivation::Identity,
            w1: Matrix::zeros(0, 0),
            b1: vec![],
            w2: Matrix::zeros(0, 0),
            b2: vec![],
            w3: Matrix::zeros(0, 0),
            b3: vec![],
            w4: Matrix::zeros(0, 0),
            b4: vec![],
            w5: Matrix::zeros(0, 0),
            b5: vec![],
        });
        Self {
            input_dim,
            hidden_dim,
            latent_dim,
            mu_activation: MuActivation::Identity,
            w1: g.w1,
            b1: g.b1,
            w2: g.w2,
            b2: g.b2,
            w3: g.w3,
            b3: g.b3,
            w4: g.w4,
            b4: g.b4,
            w5: g.w5,
            b5: g.b5,
        }
    }

    /// Expected `(rows, cols)` of each block; vectors have `cols == 1`.
    pub fn block_shapes(&self) -> [(usize, usize); 10] {
        let (i, h, d) = (self.input_dim, self.hidden_dim, self.latent_dim);
        [(h, i), (h, 1), (d, h), (d, 1), (d, h), (d, 1), (h, d), (h, 1), (i, h), (i, 1)]
    }

    pub fn check_shapes(&self) -> Result<()> {
        for ((name, (r, c)), block) in BLOCK_NAMES.iter().zip(self.block_shapes()).zip(self.blocks()) {
            if block.len() != r * c {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} entries, expected {r} x {c}",
                    block.len()
                )));
            }
        }
        let mats = [&self.w1, &self.w2, &self.w3, &self.w4, &self.w5];
        for (m, (r, c)) in mats.iter().zip([0, 2, 4, 6, 8].map(|i| self.block_shapes()[i])) {
            if m.rows != r || m.cols != c {
                return Err(Error::DimensionMismatch(format!(
                    "matrix is {} x {}, expected {r} x {c}",
                    m.rows, m.cols
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Euclidean norm of each block, for diagnostics.
    pub fn block_norms(&self) -> Vec<(&'static str, f64)> {
        BLOCK_NAMES
            .iter()
            .zip(self.blocks())
            .map(|(&n, b)| (n, b.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> Result<VaeParams> {
    if input_dim == 0 || hidden_dim == 0 || latent_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive (input {input_dim}, hidden {hidden_dim}, latent {latent_dim})"
        )));
    }
    if latent_dim >= input_dim {
        return Err(Error::InvalidArgument(format!(
            "latent_dim {latent_dim} must be smaller than input_dim {input_dim}"
        )));
    }
    let mut p = VaeParams::zeros(input_dim, hidden_dim, latent_dim);
    let mut rng = rng::seeded(seed);
    for m in [&mut p.w1, &mut p.w2, &mut p.w3, &mut p.w4, &mut p.w5] {
        let bound = glorot_bound(m.cols, m.rows);
        for w in &mut m.data {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(p)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Post-ReLU hidden activations.
    pub h: Vec<f64>,
    pub mu: Vec<f64>,
    /// Clamped log-variance.
    pub logvar: Vec<f64>,
    /// μ head pre-activation.
    pub mu_raw: Vec<f64>,
    /// Log-variance head before clamping.
    pub logvar_raw: Vec<f64>,
}

impl EncoderOutput {
    pub fn sigma(&self) -> Vec<f64> {
        self.logvar.iter().map(|&lv| (0.5 * lv).exp()).collect()
    }
}

pub fn encoder_forward(p: &VaeParams, x: &[f64]) -> Result<EncoderOutput> {
    if x.len() != p.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input has length {}, model expects {}",
            x.len(),
            p.input_dim
        )));
    }
    let h: Vec<f64> = p.w1.affine(x, &p.b1).into_iter().map(relu).collect();
    let mu_raw = p.w2.affine(&h, &p.b2);
    let mu = match p.mu_activation {
        MuActivation::Identity => mu_raw.clone(),
        MuActivation::Relu => mu_raw.iter().copied().map(relu).collect(),
    };
    let logvar_raw = p.w3.affine(&h, &p.b3);
    let logvar = logvar_raw
        .iter()
        .map(|&v| v.clamp(LOGVAR_MIN, LOGVAR_MAX))
        .collect();
    Ok(EncoderOutput {
        h,
        mu,
        logvar,
        mu_raw,
        logvar_raw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
}

impl LatentSample {
    /// `z = μ + exp(logvar/2) ⊙ ε` for a given ε.
    pub fn from_eps(e: &EncoderOutput, eps: Vec<f64>) -> Result<Self> {
        if eps.len() != e.mu.len() {
            return Err(Error::DimensionMismatch(format!(
                "eps has length {}, latent dim is {}",
                eps.len(),
                e.mu.len()
            )));
        }
        let z = e
            .mu
            .iter()
            .zip(&e.logvar)
            .zip(&eps)
            .map(|((&m, &lv), &n)| m + (0.5 * lv).exp() * n)
            .collect();
        Ok(Self { eps, z })
    }

    /// Posterior mean, `z = μ` with `ε = 0`.
    pub fn mean(e: &EncoderOutput) -> Self {
        Self {
            eps: vec![0.0; e.mu.len()],
            z: e.mu.clone(),
        }
    }
}

pub fn reparameterize<R: Rng + ?Sized>(e: &EncoderOutput, rng: &mut R) -> LatentSample {
    let eps = rng::standard_normal_vec(rng, e.mu.len());
    LatentSample::from_eps(e, eps).expect("eps drawn at latent length")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    /// Post-ReLU decoder hidden activations.
    pub hidden: Vec<f64>,
    pub recon: Vec<f64>,
}

pub fn decoder_forward_full(p: &VaeParams, z: &[f64]) -> Result<DecoderOutput> {
    if z.len() != p.latent_dim {
        return Err(Error::DimensionMismatch(format!(
            "latent vector has length {}, model expects {}",
            z.len(),
            p.latent_dim
        )));
    }
    let hidden: Vec<f64> = p.w4.affine(z, &p.b4).into_iter().map(relu).collect();
    let recon = p.w5.affine(&hidden, &p.b5).into_iter().map(sigmoid).collect();
    Ok(DecoderOutput { hidden, recon })
}

pub fn decoder_forward(p: &VaeParams, z: &[f64]) -> Result<Vec<f64>> {
    decoder_forward_full(p, z).map(|d| d.recon)
}

/// `½ Σ (μ² + σ² − log σ² − 1)`
pub fn kl_divergence(e: &EncoderOutput) -> f64 {
    kl_terms(&e.mu, &e.logvar)
}

pub fn kl_terms(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// `½ Σ_{mask} (x − x̂)²` and the number of masked-in positions.
pub fn recon_loss(recon: &[f64], x: &SlotVector) -> Result<(f64, usize)> {
    if recon.len() != x.x.len() || x.mask.len() != x.x.len() {
        return Err(Error::DimensionMismatch(format!(
            "reconstruction length {}, input length {}, mask length {}",
            recon.len(),
            x.x.len(),
            x.mask.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0;
    for ((&r, &v), &m) in recon.iter().zip(&x.x).zip(&x.mask) {
        if m {
            let d = v - r;
            sum += d * d;
            count += 1;
        }
    }
    Ok((0.5 * sum, count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    /// Multiplier on `kl` in `total`; 1 for the plain ELBO.
    pub kl_weight: f64,
    /// `recon + kl_weight · kl`
    pub total: f64,
    pub observed_count: usize,
}

/// Everything one forward pass produces; the input to [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub loss: LossBreakdown,
    pub sample: LatentSample,
    pub encoder: EncoderOutput,
    pub decoder: DecoderOutput,
}

impl ForwardPass {
    pub fn recon(&self) -> &[f64] {
        &self.decoder.recon
    }
}

/// Loss with a fresh ε drawn from `rng`.
pub fn total_loss<R: Rng + ?Sized>(p: &VaeParams, x: &SlotVector, rng: &mut R) -> Result<ForwardPass> {
    weighted_loss(p, x, rng, 1.0)
}

/// Loss with a caller-supplied ε.
pub fn total_loss_with_eps(p: &VaeParams, x: &SlotVector, eps: &[f64]) -> Result<ForwardPass> {
    weighted_loss_with_eps(p, x, eps, 1.0)
}

/// [`total_loss`] with the KL term scaled by `kl_weight`.
pub fn weighted_loss<R: Rng + ?Sized>(
    p: &VaeParams,
    x: &SlotVector,
    rng: &mut R,
    kl_weight: f64,
) -> Result<ForwardPass> {
    let encoder = encoder_forward(p, &x.x)?;
    let sample = reparameterize(&encoder, rng);
    finish_forward(p, x, encoder, sample, kl_weight)
}

/// [`total_loss_with_eps`] with the KL term scaled by `kl_weight`.
pub fn weighted_loss_with_eps(
    p: &VaeParams,
    x: &SlotVector,
    eps: &[f64],
    kl_weight: f64,
) -> Result<ForwardPass> {
    let encoder = encoder_forward(p, &x.x)?;
    let sample = LatentSample::from_eps(&encoder, eps.to_vec())?;
    finish_forward(p, x, encoder, sample, kl_weight)
}

fn finish_forward(
    p: &VaeParams,
    x: &SlotVector,
    encoder: EncoderOutput,
    sample: LatentSample,
    kl_weight: f64,
) -> Result<ForwardPass> {
    let decoder = decoder_forward_full(p, &sample.z)?;
    let (recon, observed_count) = recon_loss(&decoder.recon, x)?;
    let kl = kl_divergence(&encoder);
    Ok(ForwardPass {
        loss: LossBreakdown {
            recon,
            kl,
            kl_weight,
            total: recon + kl_weight * kl,
            observed_count,
        },
        sample,
        encoder,
        decoder,
    })
}

/// Exact gradient of the per-vector loss, with ε held fixed. The KL weight
/// is taken from `fwd.loss`.
pub fn backward(p: &VaeParams, x: &SlotVector, fwd: &ForwardPass) -> Result<VaeGradients> {
    let mut g = VaeGradients::zeros_like(p);
    accumulate_backward(p, x, fwd, &mut g)?;
    Ok(g)
}

/// Adds this vector's gradient into `g`.
pub fn accumulate_backward(
    p: &VaeParams,
    x: &SlotVector,
    fwd: &ForwardPass,
    g: &mut VaeGradients,
) -> Result<()> {
    let (i_dim, h_dim, d_dim) = (p.input_dim, p.hidden_dim, p.latent_dim);
    let enc = &fwd.encoder;
    let dec = &fwd.decoder;
    let beta = fwd.loss.kl_weight;
    if x.x.len() != i_dim
        || dec.recon.len() != i_dim
        || dec.hidden.len() != h_dim
        || enc.h.len() != h_dim
        || enc.mu.len() != d_dim
        || enc.logvar_raw.len() != d_dim
        || fwd.sample.z.len() != d_dim
        || fwd.sample.eps.len() != d_dim
    {
        return Err(Error::DimensionMismatch(
            "forward intermediates do not match the parameter shapes".into(),
        ));
    }

    // Output layer: d/do of ½(x − sigmoid(o))² is (x̂ − x)·x̂(1 − x̂).
    let d_out: Vec<f64> = dec
        .recon
        .iter()
        .zip(&x.x)
        .zip(&x.mask)
        .map(|((&r, &v), &m)| if m { (r - v) * r * (1.0 - r) } else { 0.0 })
        .collect();
    add(&mut g.b5, &d_out);
    g.w5.add_outer(&d_out, &dec.hidden);

    let mut d_dec_hidden = p.w5.transpose_mul(&d_out);
    relu_gate(&mut d_dec_hidden, &dec.hidden);
    add(&mut g.b4, &d_dec_hidden);
    g.w4.add_outer(&d_dec_hidden, &fwd.sample.z);

    let d_z = p.w4.transpose_mul(&d_dec_hidden);

    // μ: reconstruction path plus β·μ from the KL term.
    let d_mu_raw: Vec<f64> = (0..d_dim)
        .map(|j| {
            let d = d_z[j] + beta * enc.mu[j];
            match p.mu_activation {
                MuActivation::Identity => d,
                MuActivation::Relu if enc.mu_raw[j] > 0.0 => d,
                MuActivation::Relu => 0.0,
            }
        })
        .collect();
    // logvar: z depends on it through ½·exp(lv/2)·ε; KL contributes β·½(exp(lv) − 1).
    let d_lv_raw: Vec<f64> = (0..d_dim)
        .map(|j| {
            let raw = enc.logvar_raw[j];
            if raw > LOGVAR_MIN && raw < LOGVAR_MAX {
                let lv = enc.logvar[j];
                d_z[j] * fwd.sample.eps[j] * 0.5 * (0.5 * lv).exp() + beta * 0.5 * (lv.exp() - 1.0)
            } else {
                0.0
            }
        })
        .collect();
    add(&mut g.b2, &d_mu_raw);
    g.w2.add_outer(&d_mu_raw, &enc.h);
    add(&mut g.b3, &d_lv_raw);
    g.w3.add_outer(&d_lv_raw, &enc.h);

    let mut d_h = p.w2.transpose_mul(&d_mu_raw);
    add(&mut d_h, &p.w3.transpose_mul(&d_lv_raw));
    relu_gate(&mut d_h, &enc.h);
    add(&mut g.b1, &d_h);
    g.w1.add_outer(&d_h, &x.x);
    Ok(())
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

// ReLU'(0) = 0: the post-activation is positive exactly when the input was.
fn relu_gate(grad: &mut [f64], activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: VaeGradients,
    pub v: VaeGradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(p: &VaeParams) -> Self {
        Self {
            m: VaeGradients::zeros_like(p),
            v: VaeGradients::zeros_like(p),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at step `state.step + 1`.
pub fn adam_step(
    p: &mut VaeParams,
    g: &VaeGradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let shapes_match = p
        .blocks()
        .iter()
        .zip(g.blocks())
        .zip(state.m.blocks())
        .zip(state.v.blocks())
        .all(|(((a, b), c), d)| a.len() == b.len() && a.len() == c.len() && a.len() == d.len());
    if !shapes_match {
        return Err(Error::DimensionMismatch(
            "gradient or optimizer state does not match parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((param, grad), m), v) in p
        .blocks_mut()
        .into_iter()
        .zip(g.blocks())
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut())
    {
        adam_update(param, grad, m, v, bc1, bc2, cfg);
    }
    Ok(())
}

fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    bc1: f64,
    bc2: f64,
    cfg: &AdamConfig,
) {
    for i in 0..param.len() {
        let gi = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(x: &[f64], mask: &[bool]) -> SlotVector {
        SlotVector {
            slot_index: 0,
            x: x.to_vec(),
            mask: mask.to_vec(),
        }
    }

    #[test]
    fn init_is_glorot_with_zero_biases() {
        let p = init_params(63, 64, 8, 11).unwrap();
        for b in [&p.b1, &p.b2, &p.b3, &p.b4, &p.b5] {
            assert!(b.iter().all(|&v| v == 0.0));
        }
        let bound = glorot_bound(63, 64);
        assert!(p.w1.data.iter().all(|w| w.abs() <= bound));
        assert!(p.w1.data.iter().any(|w| w.abs() > 0.5 * bound));
        assert_eq!(p, init_params(63, 64, 8, 11).unwrap());
        assert_ne!(p, init_params(63, 64, 8, 12).unwrap());
        p.check_shapes().unwrap();
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_params(0, 4, 2, 0).is_err());
        assert!(init_params(4, 0, 2, 0).is_err());
        assert!(init_params(4, 4, 4, 0).is_err());
    }

    #[test]
    fn zero_params_give_unit_posterior_and_half_output() {
        let p = VaeParams::zeros(5, 4, 2);
        let e = encoder_forward(&p, &[0.3, 0.1, 0.9, 0.0, 1.0]).unwrap();
        assert!(e.h.iter().all(|&v| v == 0.0));
        assert_eq!(e.mu, vec![0.0; 2]);
        assert_eq!(e.logvar, vec![0.0; 2]);
        assert_eq!(kl_divergence(&e), 0.0);
        assert_eq!(decoder_forward(&p, &[1.3, -0.2]).unwrap(), vec![0.5; 5]);
    }

    #[test]
    fn identity_first_layer_passes_nonnegative_input() {
        let mut p = VaeParams::zeros(4, 4, 2);
        p.w1 = Matrix::identity(4);
        let x = [0.0, 0.25, 0.5, 1.0];
        assert_eq!(encoder_forward(&p, &x).unwrap().h, x.to_vec());
        assert!(encoder_forward(&p, &x[..3]).is_err());
    }

    #[test]
    fn decoder_saturates() {
        let mut p = VaeParams::zeros(3, 2, 1);
        p.b5 = vec![50.0; 3];
        let out = decoder_forward(&p, &[0.0]).unwrap();
        assert!(out.iter().all(|&v| v > 1.0 - 1e-9));
        assert!(decoder_forward(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn logvar_is_clamped() {
        let mut p = VaeParams::zeros(2, 1, 1);
        p.b1 = vec![1.0];
        p.w3.data = vec![100.0];
        let e = encoder_forward(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(e.logvar, vec![LOGVAR_MAX]);
        p.w3.data = vec![-100.0];
        assert_eq!(encoder_forward(&p, &[0.0, 0.0]).unwrap().logvar, vec![LOGVAR_MIN]);
    }

    #[test]
    fn kl_hand_values() {
        assert_eq!(kl_terms(&[0.0], &[0.0]), 0.0);
        assert_eq!(kl_terms(&[1.0], &[0.0]), 0.5);
        assert!(kl_terms(&[0.0, 0.3], &[0.2, -1.0]) > 0.0);
    }

    #[test]
    fn reparameterize_limits() {
        let e = EncoderOutput {
            h: vec![],
            mu: vec![0.0, 0.0],
            logvar: vec![0.0, 0.0],
            mu_raw: vec![0.0, 0.0],
            logvar_raw: vec![0.0, 0.0],
        };
        let s = reparameterize(&e, &mut rng::seeded(3));
        assert_eq!(s.z, s.eps);

        let tight = EncoderOutput {
            mu: vec![2.5],
            logvar: vec![LOGVAR_MIN],
            mu_raw: vec![2.5],
            logvar_raw: vec![LOGVAR_MIN],
            h: vec![],
        };
        let mut r = rng::seeded(4);
        for _ in 0..1000 {
            let s = reparameterize(&tight, &mut r);
            if s.eps[0].abs() <= 3.0 {
                assert!((s.z[0] - 2.5).abs() < 0.03);
            }
            assert_eq!(s.z[0], 2.5 + (0.5 * LOGVAR_MIN).exp() * s.eps[0]);
        }
    }

    #[test]
    fn recon_loss_cases() {
        let x = vector(&[1.0, 0.4], &[true, false]);
        assert_eq!(recon_loss(&[1.0, 0.0], &x).unwrap(), (0.0, 1));
        assert_eq!(recon_loss(&[0.0, 0.9], &x).unwrap(), (0.5, 1));
        let none = vector(&[1.0, 0.4], &[false, false]);
        assert_eq!(recon_loss(&[0.3, 0.9], &none).unwrap(), (0.0, 0));
        assert!(recon_loss(&[0.3], &x).is_err());
    }

    #[test]
    fn total_loss_vanishes_and_backward_is_zero_at_origin() {
        let p = VaeParams::zeros(3, 2, 1);
        let x = vector(&[0.0, 0.0, 0.0], &[false; 3]);
        let fwd = total_loss(&p, &x, &mut rng::seeded(0)).unwrap();
        assert_eq!(fwd.loss.total, 0.0);
        let g = backward(&p, &x, &fwd).unwrap();
        assert!(g.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn total_is_sum_of_terms() {
        let p = init_params(6, 5, 2, 1).unwrap();
        let x = vector(&[0.1, 0.9, 0.0, 0.4, 0.0, 0.7], &[true, true, false, true, false, true]);
        let fwd = total_loss_with_eps(&p, &x, &[0.3, -1.1]).unwrap();
        let (r, n) = recon_loss(fwd.recon(), &x).unwrap();
        assert_eq!(fwd.loss.recon, r);
        assert_eq!(fwd.loss.observed_count, n);
        assert_eq!(fwd.loss.kl, kl_divergence(&fwd.encoder));
        assert_eq!(fwd.loss.total, r + fwd.loss.kl);
    }

    #[test]
    fn b5_gradient_single_entry() {
        let mut p = VaeParams::zeros(1, 1, 1);
        p.b5 = vec![0.3];
        let x = vector(&[0.9], &[true]);
        let fwd = total_loss_with_eps(&p, &x, &[0.0]).unwrap();
        let g = backward(&p, &x, &fwd).unwrap();
        let s = sigmoid(0.3);
        assert_eq!(fwd.recon(), &[s]);
        assert!((g.b5[0] - s * (1.0 - s) * (s - 0.9)).abs() < 1e-15);

        let hidden = vector(&[0.9], &[false]);
        let fwd = total_loss_with_eps(&p, &hidden, &[0.0]).unwrap();
        assert_eq!(backward(&p, &hidden, &fwd).unwrap().b5, vec![0.0]);
    }

    #[test]
    fn backward_rejects_mismatched_intermediates() {
        let p = init_params(4, 3, 2, 0).unwrap();
        let other = init_params(5, 3, 2, 0).unwrap();
        let x5 = vector(&[0.1; 5], &[true; 5]);
        let fwd = total_loss_with_eps(&other, &x5, &[0.0, 0.0]).unwrap();
        assert!(backward(&p, &x5, &fwd).is_err());
    }

    #[test]
    fn adam_fixed_point_and_first_step() {
        let mut p = init_params(4, 3, 2, 5).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = VaeGradients::zeros_like(&p);
        adam_step(&mut p, &zero, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.m, zero);
        assert_eq!(st.v, zero);

        let mut g = VaeGradients::zeros_like(&p);
        g.b5 = vec![3.0, -0.02, 1e-3, -50.0];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        for (i, &gi) in g.b5.iter().enumerate() {
            let delta = p.b5[i] - before.b5[i];
            let expected = -1e-3 * gi / (gi.abs() + 1e-8);
            assert!((delta - expected).abs() < 1e-15);
            assert!((delta.abs() - 1e-3).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = init_params(4, 3, 2, 5).unwrap();
        let q = init_params(5, 3, 2, 5).unwrap();
        let mut st = AdamState::new(&p);
        let g = VaeGradients::zeros_like(&q);
        assert!(adam_step(&mut p, &g, &mut st, &AdamConfig::default()).is_err());
    }
}
