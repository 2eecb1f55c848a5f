//! Independent reference arithmetic and fixtures shared by the integration
//! tests. Nothing here calls the library's forward or optimizer code.
#![allow(dead_code, clippy::manual_clamp)]

use vaelf::data::{generate_synthetic_with, ChannelProfile, EntrySplit, HdiTensor};
use vaelf::vae::{Matrix, MuActivation, VaeParams};

/// Row-major nested copy of a matrix.
pub fn nested(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| (0..m.cols).map(|c| m.data[r * m.cols + c]).collect())
        .collect()
}

/// `W·v + b`, accumulated column by column.
pub fn matvec(w: &[Vec<f64>], v: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (j, &vj) in v.iter().enumerate() {
        for (i, row) in w.iter().enumerate() {
            out[i] += row[j] * vj;
        }
    }
    out
}

pub struct RefEncoder {
    pub h: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

pub fn ref_encoder(p: &VaeParams, x: &[f64]) -> RefEncoder {
    let h: Vec<f64> = matvec(&nested(&p.w1), x, &p.b1)
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.0 })
        .collect();
    let mut mu = matvec(&nested(&p.w2), &h, &p.b2);
    if p.mu_activation == MuActivation::Relu {
        mu.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let logvar = matvec(&nested(&p.w3), &h, &p.b3)
        .into_iter()
        .map(|v| if v < -10.0 { -10.0 } else if v > 10.0 { 10.0 } else { v })
        .collect();
    RefEncoder { h, mu, logvar }
}

pub fn ref_decoder(p: &VaeParams, z: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = matvec(&nested(&p.w4), z, &p.b4)
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.0 })
        .collect();
    matvec(&nested(&p.w5), &g, &p.b5)
        .into_iter()
        .map(|o| 1.0 / (1.0 + (-o).exp()))
        .collect()
}

/// Per-vector loss with the given KL weight, for a fixed ε.
pub fn ref_loss(p: &VaeParams, x: &[f64], mask: &[bool], eps: &[f64], kl_weight: f64) -> f64 {
    let e = ref_encoder(p, x);
    let z: Vec<f64> = (0..eps.len())
        .map(|j| e.mu[j] + (e.logvar[j] / 2.0).exp() * eps[j])
        .collect();
    let r = ref_decoder(p, &z);
    let mut recon = 0.0;
    for i in 0..x.len() {
        if mask[i] {
            recon += 0.5 * (x[i] - r[i]).powi(2);
        }
    }
    let mut kl = 0.0;
    for j in 0..e.mu.len() {
        kl += 0.5 * (e.mu[j].powi(2) + e.logvar[j].exp() - e.logvar[j] - 1.0);
    }
    recon + kl_weight * kl
}

/// Adam over one flat parameter vector.
pub struct FlatAdam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
}

impl FlatAdam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

/// Noiseless daily sinusoid per channel, no weekly term.
pub fn sinusoid_profiles(k: usize) -> Vec<ChannelProfile> {
    (0..k)
        .map(|c| ChannelProfile {
            base: 10.0 + 5.0 * c as f64,
            amplitude: 4.0 + c as f64,
            weekly: 0.0,
            noise_sigma: 0.0,
            phase: 0.15 * c as f64,
        })
        .collect()
}

/// Noiseless sinusoid tensor at 50% density, normalized and split.
pub fn sinusoid_fixture(k: usize, n_days: usize, m_slots: usize, seed: u64) -> (HdiTensor, EntrySplit) {
    let t = generate_synthetic_with(&sinusoid_profiles(k), n_days, m_slots, seed)
        .unwrap()
        .apply_sparsity(0.5, seed)
        .unwrap()
        .normalize()
        .unwrap();
    let split = t.split_entries(seed).unwrap();
    (t, split)
}
