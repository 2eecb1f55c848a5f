//! Epoch loop, validation-based early stopping and posterior-mean imputation.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{EntrySplit, HdiTensor, Position, Role, SlotVector};
use crate::error::{Error, Result};
use crate::eval;
use crate::rng;
use crate::vae::{
    accumulate_backward, adam_step, decoder_forward, encoder_forward, init_params, weighted_loss,
    AdamConfig, AdamState, MuActivation, VaeGradients, VaeParams,
};

/// β = 0.01, i.e. observation σ = 0.1 of the normalized range. At β = 1 the
/// reconstruction term over a handful of observed entries per vector never
/// pays for the KL cost and the posterior collapses onto the prior.
pub const DEFAULT_KL_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub mu_activation: MuActivation,
    /// Multiplier β on the KL term of the training loss. Scaling the whole
    /// loss by σ² shows β = σ² is the ELBO under a Gaussian likelihood with
    /// observation variance σ² (in normalized units); β = 1 is the unit-variance
    /// form.
    pub kl_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs_max: 300,
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps_adam: adam.eps,
            patience: 20,
            seed: 0,
            hidden_dim: 64,
            latent_dim: 8,
            mu_activation: MuActivation::Identity,
            kl_weight: DEFAULT_KL_WEIGHT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("train.{field}: {msg}")));
        if self.epochs_max < 1 {
            return bad("epochs_max", "must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size", "must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience", "must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !(self.eps_adam > 0.0) {
            return bad("eps_adam", "must be positive");
        }
        if !(self.kl_weight > 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight", "must be positive");
        }
        if self.hidden_dim < 1 || self.latent_dim < 1 {
            return bad("hidden_dim", "hidden_dim and latent_dim must be >= 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-vector total loss over the epoch.
    pub train_loss: f64,
    pub valid_rmse: f64,
    pub valid_mae: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation RMSE.
    pub params: VaeParams,
    /// Optimizer state at that epoch.
    pub adam: AdamState,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.records[self.best_epoch - 1]
    }
}

/// Mean per-vector loss and the averaged gradient over `batch`.
///
/// ε is drawn from `rng` in batch order and the gradient reduction runs in
/// the same order.
pub fn batch_step<R: rand::Rng + ?Sized>(
    p: &VaeParams,
    batch: &[&SlotVector],
    rng: &mut R,
    kl_weight: f64,
) -> Result<(f64, VaeGradients)> {
    let mut grads = VaeGradients::zeros_like(p);
    let mut loss = 0.0;
    for x in batch {
        let fwd = weighted_loss(p, x, rng, kl_weight)?;
        loss += fwd.loss.total;
        accumulate_backward(p, x, &fwd, &mut grads)?;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((loss * scale, grads))
}

/// Trains on the training split of a normalized tensor.
pub fn train(t: &HdiTensor, split: &EntrySplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_vectors = t.vectorize(split, Role::Train)?;
    if train_vectors.iter().all(|v| v.observed_count() == 0) {
        return Err(Error::InvalidArgument("training mask is empty".into()));
    }
    if split.valid.is_empty() {
        return Err(Error::InvalidArgument("validation split is empty".into()));
    }
    let mut params = init_params(t.vector_len(), cfg.hidden_dim, cfg.latent_dim, cfg.seed)?;
    params.mu_activation = cfg.mu_activation;
    let mut adam = AdamState::new(&params);
    let adam_cfg = cfg.adam();
    let mut rng = rng::seeded_stream(cfg.seed, 1);

    let mut order: Vec<usize> = (0..train_vectors.len()).collect();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, VaeParams, AdamState)> = None;

    for epoch in 1..=cfg.epochs_max {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SlotVector> = chunk.iter().map(|&i| &train_vectors[i]).collect();
            let (loss, grads) = batch_step(&params, &batch, &mut rng, cfg.kl_weight)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    param_norms: params.block_norms(),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        let train_loss = loss_sum / train_vectors.len() as f64;
        let (valid_rmse, valid_mae) = validation_metrics(&params, t, &train_vectors, &split.valid)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            valid_rmse,
            valid_mae,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        let improved = best.as_ref().is_none_or(|(r, ..)| valid_rmse < *r);
        if improved {
            best = Some((valid_rmse, epoch, params.clone(), adam.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params, adam) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        adam,
        records,
        best_epoch,
    })
}

/// Validation RMSE/MAE with training entries as the only visible input and
/// z = μ.
fn validation_metrics(
    p: &VaeParams,
    t: &HdiTensor,
    train_vectors: &[SlotVector],
    valid: &[Position],
) -> Result<(f64, f64)> {
    let mut by_slot: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut truth = Vec::with_capacity(valid.len());
    let mut pred = Vec::with_capacity(valid.len());
    for &pos in valid {
        let recon = match by_slot.get(&pos.slot) {
            Some(r) => r,
            None => {
                let r = reconstruct(p, &train_vectors[pos.slot].x)?;
                by_slot.entry(pos.slot).or_insert(r)
            }
        };
        truth.push(t.get(pos).expect("validation entries are observed"));
        pred.push(recon[pos.channel * t.n_days() + pos.day]);
    }
    Ok((eval::rmse(&truth, &pred)?, eval::mae(&truth, &pred)?))
}

/// Encodes `x`, decodes the posterior mean.
pub fn reconstruct(p: &VaeParams, x: &[f64]) -> Result<Vec<f64>> {
    let enc = encoder_forward(p, x)?;
    decoder_forward(p, &enc.mu)
}

fn check_dims(p: &VaeParams, t: &HdiTensor) -> Result<()> {
    if p.input_dim != t.vector_len() {
        return Err(Error::DimensionMismatch(format!(
            "model input_dim {} does not match tensor vector length {} (k={}, N={})",
            p.input_dim,
            t.vector_len(),
            t.k(),
            t.n_days()
        )));
    }
    Ok(())
}

/// Normalized predictions for every unobserved entry, using all observed
/// entries as encoder input.
pub fn impute(p: &VaeParams, t: &HdiTensor) -> Result<Vec<(Position, f64)>> {
    let positions = t.unobserved_positions();
    let values = predict_at(p, t, &positions)?;
    Ok(positions.into_iter().zip(values).collect())
}

/// Normalized predictions at `positions`; same path as [`impute`].
pub fn predict_at(p: &VaeParams, t: &HdiTensor, positions: &[Position]) -> Result<Vec<f64>> {
    check_dims(p, t)?;
    for &pos in positions {
        t.check_position(pos)?;
    }
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = t.observed_vectors()?;
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(positions.len());
    for &pos in positions {
        let recon = match cache.entry(pos.slot) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(reconstruct(p, &vectors[pos.slot].x)?),
        };
        out.push(recon[pos.channel * t.n_days() + pos.day]);
    }
    Ok(out)
}
