//! Linear latent-factor baseline and a per-channel mean imputer.
//!
//! The tensor is viewed as a `(k·N) × M` matrix: row `c·N + n`, column `m`,
//! the same layout the slot vectors use. Predictions are `P_row · Q_col`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EntrySplit, HdiTensor, Position};
use crate::error::{Error, Result};
use crate::eval;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    pub k: usize,
    pub n_days: usize,
    pub m_slots: usize,
    pub rank: usize,
    pub seed: u64,
    /// `(k·N) × rank`, row-major.
    pub p: Vec<f64>,
    /// `M × rank`, row-major.
    pub q: Vec<f64>,
}

impl FactorMatrices {
    pub fn rows(&self) -> usize {
        self.k * self.n_days
    }

    pub fn cols(&self) -> usize {
        self.m_slots
    }

    /// Factors drawn uniformly from `[0, 0.1]`.
    pub fn init(k: usize, n_days: usize, m_slots: usize, rank: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(0.0..=0.1)).collect::<Vec<f64>>();
        let p = draw(k * n_days * rank);
        let q = draw(m_slots * rank);
        Self {
            k,
            n_days,
            m_slots,
            rank,
            seed,
            p,
            q,
        }
    }

    pub fn p_row(&self, row: usize) -> &[f64] {
        &self.p[row * self.rank..(row + 1) * self.rank]
    }

    pub fn q_row(&self, col: usize) -> &[f64] {
        &self.q[col * self.rank..(col + 1) * self.rank]
    }

    fn row_of(&self, pos: Position) -> usize {
        pos.channel * self.n_days + pos.day
    }

    pub fn predict_one(&self, pos: Position) -> f64 {
        self.p_row(self.row_of(pos))
            .iter()
            .zip(self.q_row(pos.slot))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// One SGD update on a single observed entry, with `e = x − P_row·Q_col`:
    /// `P_row += lr·(e·Q_col − λ·P_row)`, `Q_col += lr·(e·P_row − λ·Q_col)`
    /// using the pre-update `P_row`. Returns `e`.
    pub fn sgd_update(&mut self, pos: Position, x: f64, lr: f64, lambda: f64) -> f64 {
        let e = x - self.predict_one(pos);
        let r = self.row_of(pos);
        let rank = self.rank;
        for d in 0..rank {
            let pv = self.p[r * rank + d];
            let qv = self.q[pos.slot * rank + d];
            self.p[r * rank + d] = pv + lr * (e * qv - lambda * pv);
            self.q[pos.slot * rank + d] = qv + lr * (e * pv - lambda * qv);
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfaConfig {
    pub rank: usize,
    pub lr: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LfaConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            lr: 0.01,
            lambda: 0.02,
            epochs: 300,
            patience: 20,
            seed: 0,
        }
    }
}

impl LfaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("lfa.{field}: {msg}")));
        if self.rank < 1 {
            return bad("rank", "must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be non-negative");
        }
        if self.epochs < 1 {
            return bad("epochs", "must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience", "must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfaEpoch {
    pub epoch: usize,
    pub train_rmse: f64,
    pub valid_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct LfaOutcome {
    /// Factors from the epoch with the lowest validation RMSE.
    pub factors: FactorMatrices,
    pub records: Vec<LfaEpoch>,
    pub best_epoch: usize,
}

/// SGD on the regularized squared error over shuffled training entries, with
/// early stopping on validation RMSE. An empty validation split disables
/// early stopping and keeps the final factors.
pub fn lfa_train(t: &HdiTensor, split: &EntrySplit, cfg: &LfaConfig) -> Result<LfaOutcome> {
    cfg.validate()?;
    if cfg.rank >= t.vector_len().min(t.m_slots()) {
        return Err(Error::InvalidArgument(format!(
            "rank {} must be below min(k·N, M) = {}",
            cfg.rank,
            t.vector_len().min(t.m_slots())
        )));
    }
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let train: Vec<(Position, f64)> = split
        .train
        .iter()
        .map(|&p| {
            t.check_position(p)?;
            t.get(p)
                .map(|v| (p, v))
                .ok_or_else(|| Error::InvalidArgument(format!("training entry {p:?} is unobserved")))
        })
        .collect::<Result<_>>()?;
    let valid_truth: Vec<f64> = split
        .valid
        .iter()
        .map(|&p| t.get(p).ok_or_else(|| Error::InvalidArgument(format!("{p:?} is unobserved"))))
        .collect::<Result<_>>()?;

    let mut f = FactorMatrices::init(t.k(), t.n_days(), t.m_slots(), cfg.rank, cfg.seed);
    let mut rng = rng::seeded_stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, FactorMatrices)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sq = 0.0;
        for &i in &order {
            let (pos, x) = train[i];
            let e = f.sgd_update(pos, x, cfg.lr, cfg.lambda);
            sq += e * e;
        }
        let loss = 0.5 * sq;
        if !loss.is_finite() || loss > 1e6 {
            return Err(Error::Diverged(format!(
                "epoch {epoch}: training loss {loss:e} (lr {}, rank {})",
                cfg.lr, cfg.rank
            )));
        }
        let train_rmse = (sq / train.len() as f64).sqrt();
        let valid_rmse = if valid_truth.is_empty() {
            f64::NAN
        } else {
            let pred: Vec<f64> = split.valid.iter().map(|&p| f.predict_one(p)).collect();
            eval::rmse(&valid_truth, &pred)?
        };
        records.push(LfaEpoch {
            epoch,
            train_rmse,
            valid_rmse,
        });
        if valid_truth.is_empty() {
            best = Some((f64::NAN, epoch, f.clone()));
            continue;
        }
        if best.as_ref().is_none_or(|(r, ..)| valid_rmse < *r) {
            best = Some((valid_rmse, epoch, f.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, factors) = best.expect("at least one epoch ran");
    Ok(LfaOutcome {
        factors,
        records,
        best_epoch,
    })
}

/// Raw inner products `P_row · Q_col`; not clamped to `[0, 1]`.
pub fn lfa_predict(f: &FactorMatrices, positions: &[Position]) -> Result<Vec<f64>> {
    positions
        .iter()
        .map(|&p| {
            if p.channel < f.k && p.day < f.n_days && p.slot < f.m_slots {
                Ok(f.predict_one(p))
            } else {
                Err(Error::OutOfRange(format!(
                    "{p:?} outside {} x {} x {}",
                    f.k, f.n_days, f.m_slots
                )))
            }
        })
        .collect()
}

/// Per-channel means of the training entries.
pub fn channel_means(t: &HdiTensor, split: &EntrySplit) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; t.k()];
    let mut counts = vec![0usize; t.k()];
    for &p in &split.train {
        t.check_position(p)?;
        let v = t
            .get(p)
            .ok_or_else(|| Error::InvalidArgument(format!("training entry {p:?} is unobserved")))?;
        sums[p.channel] += v;
        counts[p.channel] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(c, (&s, &n))| {
            if n == 0 {
                Err(Error::InvalidArgument(format!("channel {c} has no training entries")))
            } else {
                Ok(s / n as f64)
            }
        })
        .collect()
}

/// Each position's channel training mean.
pub fn mean_impute(t: &HdiTensor, split: &EntrySplit, positions: &[Position]) -> Result<Vec<f64>> {
    let means = channel_means(t, split)?;
    positions
        .iter()
        .map(|&p| {
            t.check_position(p)?;
            Ok(means[p.channel])
        })
        .collect()
}
