//! HDI time-days tensors: construction, normalization, masking, splitting and
//! slot vectorization.
//!
//! A tensor holds `k` channels (monitored parameters), each an `N × M` grid of
//! days by samples-per-day. Storage is channel-major, then day, then slot.
//! Unobserved entries always store `0.0`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Index of one tensor entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub channel: usize,
    pub day: usize,
    pub slot: usize,
}

impl Position {
    pub const fn new(channel: usize, day: usize, slot: usize) -> Self {
        Self { channel, day, slot }
    }
}

/// Per-channel range captured at normalization time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
}

impl ChannelStats {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// One channel's `N × M` grid; `None` marks a missing entry.
pub type ChannelGrid = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct HdiTensor {
    k: usize,
    n_days: usize,
    m_slots: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
    channel_stats: Option<Vec<ChannelStats>>,
}

/// Builds a tensor from per-channel grids. The observed set is the union of
/// the per-channel `Some` entries.
pub fn build_tensor(channels: &[ChannelGrid]) -> Result<HdiTensor> {
    let k = channels.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no channels".into()));
    }
    let n_days = channels[0].len();
    let m_slots = channels[0].first().map_or(0, Vec::len);
    if n_days == 0 || m_slots == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty channel grid ({n_days} days x {m_slots} slots)"
        )));
    }
    let total = k * n_days * m_slots;
    let mut values = vec![0.0; total];
    let mut observed = vec![false; total];
    for (c, grid) in channels.iter().enumerate() {
        if grid.len() != n_days {
            return Err(Error::DimensionMismatch(format!(
                "channel {c} has {} days, expected {n_days}",
                grid.len()
            )));
        }
        for (n, row) in grid.iter().enumerate() {
            if row.len() != m_slots {
                return Err(Error::DimensionMismatch(format!(
                    "channel {c}, day {n} has {} slots, expected {m_slots}",
                    row.len()
                )));
            }
            for (m, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteValue {
                            channel: c,
                            day: n,
                            slot: m,
                            value: v,
                        });
                    }
                    let idx = (c * n_days + n) * m_slots + m;
                    values[idx] = v;
                    observed[idx] = true;
                }
            }
        }
    }
    Ok(HdiTensor {
        k,
        n_days,
        m_slots,
        values,
        observed,
        channel_stats: None,
    })
}

/// Number of entries kept when masking `total` entries down to `density`.
///
/// `⌊density · total⌋`, with a tiny tolerance so that products such as
/// `0.29 · 100` that land a rounding error below an integer are not
/// truncated one short.
pub fn sparsity_count(density: f64, total: usize) -> usize {
    let exact = density * total as f64;
    (exact + exact.abs() * 1e-12).floor() as usize
}

impl HdiTensor {
    /// Builds a tensor from dense storage-order arrays. Values at unobserved
    /// positions are discarded (stored as `0.0`).
    pub fn from_dense(
        k: usize,
        n_days: usize,
        m_slots: usize,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        if k == 0 || n_days == 0 || m_slots == 0 {
            return Err(Error::InvalidArgument(format!(
                "zero dimension in {k} x {n_days} x {m_slots}"
            )));
        }
        let total = k * n_days * m_slots;
        if values.len() != total || observed.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "expected {total} entries, got {} values and {} flags",
                values.len(),
                observed.len()
            )));
        }
        let mut t = HdiTensor {
            k,
            n_days,
            m_slots,
            values,
            observed,
            channel_stats: None,
        };
        for idx in 0..total {
            if !t.observed[idx] {
                t.values[idx] = 0.0;
            } else if !t.values[idx].is_finite() {
                let p = t.position(idx);
                return Err(Error::NonFiniteValue {
                    channel: p.channel,
                    day: p.day,
                    slot: p.slot,
                    value: t.values[idx],
                });
            }
        }
        Ok(t)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn m_slots(&self) -> usize {
        self.m_slots
    }

    /// Length of one slot vector, `k · N`.
    pub fn vector_len(&self) -> usize {
        self.k * self.n_days
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn channel_stats(&self) -> Option<&[ChannelStats]> {
        self.channel_stats.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.channel_stats.is_some()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observed_count() as f64 / self.len() as f64
    }

    pub fn index(&self, p: Position) -> usize {
        (p.channel * self.n_days + p.day) * self.m_slots + p.slot
    }

    pub fn position(&self, idx: usize) -> Position {
        let slot = idx % self.m_slots;
        let rest = idx / self.m_slots;
        Position::new(rest / self.n_days, rest % self.n_days, slot)
    }

    pub fn contains(&self, p: Position) -> bool {
        p.channel < self.k && p.day < self.n_days && p.slot < self.m_slots
    }

    pub fn check_position(&self, p: Position) -> Result<usize> {
        if self.contains(p) {
            Ok(self.index(p))
        } else {
            Err(Error::OutOfRange(format!(
                "{p:?} outside {} x {} x {}",
                self.k, self.n_days, self.m_slots
            )))
        }
    }

    pub fn get(&self, p: Position) -> Option<f64> {
        let idx = self.index(p);
        self.observed[idx].then(|| self.values[idx])
    }

    pub fn is_observed(&self, p: Position) -> bool {
        self.observed[self.index(p)]
    }

    /// Observed positions (Λ) in storage order.
    pub fn observed_positions(&self) -> Vec<Position> {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.position(i))
            .collect()
    }

    /// Unobserved positions (Γ) in storage order.
    pub fn unobserved_positions(&self) -> Vec<Position> {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| !o)
            .map(|(i, _)| self.position(i))
            .collect()
    }

    /// Per-channel min-max scaling of observed entries into `[0, 1]`.
    pub fn normalize(&self) -> Result<HdiTensor> {
        if self.is_normalized() {
            return Err(Error::Normalization("tensor is already normalized".into()));
        }
        let per_channel = self.n_days * self.m_slots;
        let mut stats = Vec::with_capacity(self.k);
        for c in 0..self.k {
            let range = c * per_channel..(c + 1) * per_channel;
            let (min, max) = self.values[range.clone()]
                .iter()
                .zip(&self.observed[range])
                .filter(|(_, &o)| o)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                    (lo.min(v), hi.max(v))
                });
            if !(min < max) {
                return Err(Error::Normalization(format!(
                    "channel {c} needs at least two distinct observed values"
                )));
            }
            stats.push(ChannelStats { min, max });
        }
        let mut out = self.clone();
        for (idx, v) in out.values.iter_mut().enumerate() {
            if out.observed[idx] {
                let s = stats[idx / per_channel];
                *v = (*v - s.min) / s.range();
            }
        }
        out.channel_stats = Some(stats);
        Ok(out)
    }

    /// Maps normalized predictions back to physical units.
    pub fn denormalize(&self, predictions: &[(Position, f64)]) -> Result<Vec<(Position, f64)>> {
        predictions
            .iter()
            .map(|&(p, v)| Ok((p, self.denormalize_value(p.channel, v)?)))
            .collect()
    }

    pub fn denormalize_value(&self, channel: usize, v: f64) -> Result<f64> {
        let stats = self
            .channel_stats
            .as_ref()
            .ok_or_else(|| Error::Normalization("tensor has no channel statistics".into()))?;
        let s = stats.get(channel).ok_or_else(|| {
            Error::OutOfRange(format!("channel {channel} of {}", stats.len()))
        })?;
        Ok(v * s.range() + s.min)
    }

    /// Physical-unit copy of a normalized tensor, statistics dropped.
    pub fn to_raw(&self) -> Result<HdiTensor> {
        let mut out = self.clone();
        for idx in 0..out.len() {
            if out.observed[idx] {
                out.values[idx] = self.denormalize_value(idx / (self.n_days * self.m_slots), out.values[idx])?;
            }
        }
        out.channel_stats = None;
        Ok(out)
    }

    /// Keeps a uniformly random subset of `⌊density · k·N·M⌋` observed entries.
    pub fn apply_sparsity(&self, density: f64, seed: u64) -> Result<HdiTensor> {
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "density {density} outside (0, 1]"
            )));
        }
        let target = sparsity_count(density, self.len());
        let observed: Vec<usize> = (0..self.len()).filter(|&i| self.observed[i]).collect();
        if target > observed.len() {
            return Err(Error::InvalidArgument(format!(
                "density {density} needs {target} observed entries but only {} are available",
                observed.len()
            )));
        }
        if target == 0 {
            return Err(Error::InvalidArgument(format!(
                "density {density} leaves no observed entries in {} cells",
                self.len()
            )));
        }
        let mut out = self.clone();
        if target == observed.len() {
            return Ok(out);
        }
        let mut rng = rng::seeded(seed);
        let keep = rand::seq::index::sample(&mut rng, observed.len(), target);
        out.observed.iter_mut().for_each(|o| *o = false);
        for i in keep.iter() {
            out.observed[observed[i]] = true;
        }
        for idx in 0..out.len() {
            if !out.observed[idx] {
                out.values[idx] = 0.0;
            }
        }
        Ok(out)
    }

    /// Copy with the given positions marked unobserved.
    pub fn without(&self, positions: &[Position]) -> Result<HdiTensor> {
        let mut out = self.clone();
        for &p in positions {
            let idx = self.check_position(p)?;
            out.observed[idx] = false;
            out.values[idx] = 0.0;
        }
        Ok(out)
    }

    /// Copy with one observed value replaced.
    pub fn with_value(&self, p: Position, v: f64) -> Result<HdiTensor> {
        let idx = self.check_position(p)?;
        if !self.observed[idx] {
            return Err(Error::InvalidArgument(format!("{p:?} is not observed")));
        }
        let mut out = self.clone();
        out.values[idx] = v;
        Ok(out)
    }

    /// Uniform 60/20/20 partition of the observed set.
    pub fn split_entries(&self, seed: u64) -> Result<EntrySplit> {
        let mut positions = self.observed_positions();
        let n = positions.len();
        if n < 5 {
            return Err(Error::InvalidArgument(format!(
                "{n} observed entries cannot populate train/valid/test splits"
            )));
        }
        let (n_train, n_valid) = EntrySplit::sizes_for(n);
        positions.shuffle(&mut rng::seeded(seed));
        let mut test = positions.split_off(n_train + n_valid);
        let mut valid = positions.split_off(n_train);
        let mut train = positions;
        train.sort_unstable();
        valid.sort_unstable();
        test.sort_unstable();
        Ok(EntrySplit { train, valid, test })
    }

    /// Slices the tensor into its `M` slot vectors. Entry `(c, n, m)` sits at
    /// position `c·N + n` of vector `m`; only entries observed and belonging
    /// to `role` are kept.
    pub fn vectorize(&self, split: &EntrySplit, role: Role) -> Result<Vec<SlotVector>> {
        if !self.is_normalized() {
            return Err(Error::Normalization("vectorize requires a normalized tensor".into()));
        }
        let labels = self.role_labels(split)?;
        let len = self.vector_len();
        let mut vectors: Vec<SlotVector> = (0..self.m_slots)
            .map(|m| SlotVector {
                slot_index: m,
                x: vec![0.0; len],
                mask: vec![false; len],
            })
            .collect();
        for (idx, &label) in labels.iter().enumerate() {
            let keep = match role {
                Role::Observed => label.is_some(),
                r => label == Some(r),
            };
            if keep {
                let row = idx / self.m_slots;
                let m = idx % self.m_slots;
                vectors[m].x[row] = self.values[idx];
                vectors[m].mask[row] = true;
            }
        }
        Ok(vectors)
    }

    /// Slot vectors carrying every observed entry.
    pub fn observed_vectors(&self) -> Result<Vec<SlotVector>> {
        if !self.is_normalized() {
            return Err(Error::Normalization("vectorize requires a normalized tensor".into()));
        }
        let len = self.vector_len();
        let mut vectors: Vec<SlotVector> = (0..self.m_slots)
            .map(|m| SlotVector {
                slot_index: m,
                x: vec![0.0; len],
                mask: vec![false; len],
            })
            .collect();
        for idx in (0..self.len()).filter(|&i| self.observed[i]) {
            let m = idx % self.m_slots;
            vectors[m].x[idx / self.m_slots] = self.values[idx];
            vectors[m].mask[idx / self.m_slots] = true;
        }
        Ok(vectors)
    }

    fn role_labels(&self, split: &EntrySplit) -> Result<Vec<Option<Role>>> {
        let mut labels = vec![None; self.len()];
        for (role, list) in [
            (Role::Train, &split.train),
            (Role::Valid, &split.valid),
            (Role::Test, &split.test),
        ] {
            for &p in list {
                let idx = self.check_position(p)?;
                if !self.observed[idx] {
                    return Err(Error::InvalidArgument(format!(
                        "split entry {p:?} is not observed"
                    )));
                }
                if labels[idx].is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "split entry {p:?} appears twice"
                    )));
                }
                labels[idx] = Some(role);
            }
        }
        Ok(labels)
    }
}

/// Which split a slot vector's mask selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Valid,
    Test,
    /// Every observed entry regardless of split.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySplit {
    pub train: Vec<Position>,
    pub valid: Vec<Position>,
    pub test: Vec<Position>,
}

impl EntrySplit {
    /// `(train, valid)` sizes for `n` observed entries; test takes the rest.
    pub fn sizes_for(n: usize) -> (usize, usize) {
        (n * 6 / 10, n * 2 / 10)
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn role(&self, role: Role) -> &[Position] {
        match role {
            Role::Train => &self.train,
            Role::Valid => &self.valid,
            Role::Test => &self.test,
            Role::Observed => &[],
        }
    }
}

/// One slot's column across all channels and days.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotVector {
    pub slot_index: usize,
    pub x: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SlotVector {
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Shape of one synthetic channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    /// Mean level.
    pub base: f64,
    /// Amplitude of the daily cycle.
    pub amplitude: f64,
    /// Amplitude of the day-of-week modulation.
    pub weekly: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Phase of the daily cycle, as a fraction of a day.
    #[serde(default)]
    pub phase: f64,
}

impl ChannelProfile {
    /// Peak-to-peak range of the noiseless signal.
    pub fn clean_range(&self) -> f64 {
        2.0 * (self.amplitude.abs() + self.weekly.abs())
    }

    /// Value without noise.
    pub fn clean_value(&self, day: usize, slot: usize, m_slots: usize) -> f64 {
        use std::f64::consts::TAU;
        let t = slot as f64 / m_slots as f64;
        let daily = (TAU * (t - self.phase)).sin();
        let weekly = (TAU * (day % 7) as f64 / 7.0).sin();
        self.base + self.amplitude * daily + self.weekly * weekly
    }
}

/// Power, voltage and apparent-power style profiles, repeated for `k > 3`,
/// with noise σ equal to 5% of each channel's clean range.
pub fn default_profiles(k: usize) -> Vec<ChannelProfile> {
    const TEMPLATES: [(f64, f64, f64, f64); 3] = [
        (800.0, 450.0, 120.0, 0.0),
        (240.0, 6.0, 1.5, 0.1),
        (900.0, 480.0, 130.0, 0.05),
    ];
    (0..k)
        .map(|c| {
            let (base, amplitude, weekly, phase) = TEMPLATES[c % TEMPLATES.len()];
            let mut p = ChannelProfile {
                base,
                amplitude,
                weekly,
                noise_sigma: 0.0,
                phase,
            };
            p.noise_sigma = 0.05 * p.clean_range();
            p
        })
        .collect()
}

/// Fully observed synthetic load tensor with the default channel profiles.
pub fn generate_synthetic(k: usize, n_days: usize, m_slots: usize, seed: u64) -> Result<HdiTensor> {
    generate_synthetic_with(&default_profiles(k), n_days, m_slots, seed)
}

/// Fully observed synthetic tensor: `base + amplitude·daily(m) +
/// weekly·weekday(n mod 7) + noise` for each channel profile.
///
/// Values are floored at `1e-3 · base` so that they stay positive even for
/// extreme noise draws.
pub fn generate_synthetic_with(
    profiles: &[ChannelProfile],
    n_days: usize,
    m_slots: usize,
    seed: u64,
) -> Result<HdiTensor> {
    let k = profiles.len();
    if k == 0 || n_days == 0 || m_slots == 0 {
        return Err(Error::InvalidArgument(format!(
            "zero dimension in {k} x {n_days} x {m_slots}"
        )));
    }
    for (c, p) in profiles.iter().enumerate() {
        let ok = [p.base, p.amplitude, p.weekly, p.noise_sigma, p.phase]
            .iter()
            .all(|v| v.is_finite());
        if !ok || p.base <= 0.0 || p.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "channel {c} profile needs finite values, base > 0 and noise_sigma >= 0"
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut values = Vec::with_capacity(k * n_days * m_slots);
    for p in profiles {
        let floor = 1e-3 * p.base;
        for n in 0..n_days {
            for m in 0..m_slots {
                let noise = if p.noise_sigma > 0.0 {
                    p.noise_sigma * rng::standard_normal(&mut rng)
                } else {
                    0.0
                };
                values.push((p.clean_value(n, m, m_slots) + noise).max(floor));
            }
        }
    }
    let total = values.len();
    HdiTensor::from_dense(k, n_days, m_slots, values, vec![true; total])
}
