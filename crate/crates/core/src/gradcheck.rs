//! Central finite-difference check of [`crate::vae::backward`].
//!
//! The numerical side only calls the forward loss with a fixed ε, so it
//! shares no code with the analytic gradient beyond the forward pass.

use rand::Rng;
use serde::Serialize;

use crate::data::SlotVector;
use crate::error::Result;
use crate::rng;
use crate::vae::{
    backward, init_params, weighted_loss_with_eps, MuActivation, VaeParams, BLOCK_NAMES, LOGVAR_MAX,
    LOGVAR_MIN,
};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

/// Pre-activations closer than this to a kink (ReLU at 0, clamp at ±10)
/// cause the configuration to be redrawn.
const KINK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckOptions {
    pub configs: usize,
    pub seed: u64,
    /// Perturb one analytic coordinate so the check must fail.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            configs: 100,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub block: &'static str,
    pub max_rel_error: f64,
    /// Largest |analytic − numeric| seen, floor or not.
    pub max_abs_diff: f64,
    pub coordinates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub configs: usize,
    pub resampled: usize,
    pub blocks: Vec<BlockError>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_abs_diff).fold(0.0, f64::max)
    }
}

/// Error of one coordinate: 0 when within the absolute floor, otherwise the
/// relative difference.
pub fn coordinate_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// One random (params, input, ε) triple.
#[derive(Debug, Clone)]
pub struct Triple {
    pub params: VaeParams,
    pub input: SlotVector,
    pub eps: Vec<f64>,
    /// KL weight; 1 on even indices, drawn from [0.01, 2) on odd ones.
    pub kl_weight: f64,
}

/// Draws a triple whose pre-activations all sit away from kinks.
/// Returns the triple and the number of rejected draws.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R, index: usize) -> (Triple, usize) {
    let mut rejected = 0;
    loop {
        let input_dim = rng.random_range(3..=10);
        let hidden_dim = rng.random_range(2..=8);
        let latent_dim = rng.random_range(1..=(input_dim - 1).min(4));
        let mut params = init_params(input_dim, hidden_dim, latent_dim, rng.random())
            .expect("valid random dims");
        if index % 4 == 3 {
            params.mu_activation = MuActivation::Relu;
        }
        for b in [&mut params.b1, &mut params.b2, &mut params.b3, &mut params.b4, &mut params.b5] {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let mask: Vec<bool> = (0..input_dim).map(|_| rng.random_bool(0.7)).collect();
        let x = x
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v } else { 0.0 })
            .collect();
        let input = SlotVector {
            slot_index: 0,
            x,
            mask,
        };
        let eps = rng::standard_normal_vec(rng, latent_dim);
        let kl_weight = if index.is_multiple_of(2) { 1.0 } else { rng.random_range(0.01..2.0) };
        let triple = Triple {
            params,
            input,
            eps,
            kl_weight,
        };
        if away_from_kinks(&triple) {
            return (triple, rejected);
        }
        rejected += 1;
    }
}

fn away_from_kinks(t: &Triple) -> bool {
    let p = &t.params;
    let h_pre = p.w1.affine(&t.input.x, &p.b1);
    let h: Vec<f64> = h_pre.iter().map(|&v| v.max(0.0)).collect();
    let mu_pre = p.w2.affine(&h, &p.b2);
    let lv_pre = p.w3.affine(&h, &p.b3);
    let mu: Vec<f64> = match p.mu_activation {
        MuActivation::Identity => mu_pre.clone(),
        MuActivation::Relu => mu_pre.iter().map(|&v| v.max(0.0)).collect(),
    };
    let z: Vec<f64> = mu
        .iter()
        .zip(&lv_pre)
        .zip(&t.eps)
        .map(|((&m, &lv), &e)| m + (0.5 * lv.clamp(LOGVAR_MIN, LOGVAR_MAX)).exp() * e)
        .collect();
    let d_pre = p.w4.affine(&z, &p.b4);
    let mut relu_pre = h_pre.iter().chain(&d_pre);
    let relu_ok = relu_pre.all(|v| v.abs() > KINK_MARGIN);
    let mu_ok = p.mu_activation == MuActivation::Identity || mu_pre.iter().all(|v| v.abs() > KINK_MARGIN);
    let lv_ok = lv_pre
        .iter()
        .all(|v| (v - LOGVAR_MIN).abs() > KINK_MARGIN && (v - LOGVAR_MAX).abs() > KINK_MARGIN);
    relu_ok && mu_ok && lv_ok
}

/// Per-block maximum coordinate error and absolute difference for one triple.
pub fn check_triple(t: &Triple, corrupt: bool) -> Result<[(f64, f64); 10]> {
    let loss = |p: &VaeParams| weighted_loss_with_eps(p, &t.input, &t.eps, t.kl_weight);
    let fwd = loss(&t.params)?;
    let mut analytic = backward(&t.params, &t.input, &fwd)?;
    if corrupt {
        analytic.w1.data[0] = analytic.w1.data[0] * 1.01 + 1e-3;
    }
    let mut probe = t.params.clone();
    let mut worst = [(0.0, 0.0); 10];
    for (b, grad_block) in analytic.blocks().into_iter().enumerate() {
        for (i, &a) in grad_block.iter().enumerate() {
            let orig = probe.blocks()[b][i];
            probe.blocks_mut()[b][i] = orig + FD_STEP;
            let plus = loss(&probe)?.loss.total;
            probe.blocks_mut()[b][i] = orig - FD_STEP;
            let minus = loss(&probe)?.loss.total;
            probe.blocks_mut()[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst[b].0 = f64::max(worst[b].0, coordinate_error(a, numeric));
            worst[b].1 = f64::max(worst[b].1, (a - numeric).abs());
        }
    }
    Ok(worst)
}

pub fn run(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(opts.seed);
    let mut worst = [(0.0f64, 0.0f64); 10];
    let mut counts = [0usize; 10];
    let mut resampled = 0;
    for index in 0..opts.configs {
        let (triple, rejected) = random_triple(&mut rng, index);
        resampled += rejected;
        let errs = check_triple(&triple, opts.corrupt)?;
        for (b, block) in triple.params.blocks().iter().enumerate() {
            worst[b].0 = worst[b].0.max(errs[b].0);
            worst[b].1 = worst[b].1.max(errs[b].1);
            counts[b] += block.len();
        }
    }
    let blocks: Vec<BlockError> = BLOCK_NAMES
        .iter()
        .enumerate()
        .map(|(b, &name)| BlockError {
            block: name,
            max_rel_error: worst[b].0,
            max_abs_diff: worst[b].1,
            coordinates: counts[b],
        })
        .collect();
    let passed = opts.configs > 0 && blocks.iter().all(|b| b.max_rel_error <= REL_TOL);
    Ok(GradCheckReport {
        configs: opts.configs,
        resampled,
        blocks,
        passed,
    })
}
