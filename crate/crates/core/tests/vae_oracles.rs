mod common;

use rand::Rng;
use vaelf::data::SlotVector;
use vaelf::rng;
use vaelf::vae::*;

fn random_params(r: &mut impl Rng, i: usize, h: usize, d: usize) -> VaeParams {
    let mut p = init_params(i, h, d, r.random()).unwrap();
    for b in p.blocks_mut() {
        b.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
    }
    p
}

#[test]
fn encoder_matches_reference_arithmetic() {
    let mut r = rng::seeded(21);
    for case in 0..50 {
        let (i, h, d) = (r.random_range(2..40), r.random_range(1..30), 1);
        let d = d + r.random_range(0..(i - 1).min(8));
        let mut p = random_params(&mut r, i, h, d);
        if case % 5 == 0 {
            p.mu_activation = MuActivation::Relu;
        }
        let x: Vec<f64> = (0..i).map(|_| r.random_range(-1.0..2.0)).collect();
        let got = encoder_forward(&p, &x).unwrap();
        let want = common::ref_encoder(&p, &x);
        for (a, b) in got.h.iter().zip(&want.h).chain(got.mu.iter().zip(&want.mu)).chain(got.logvar.iter().zip(&want.logvar)) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn decoder_matches_reference_arithmetic() {
    let mut r = rng::seeded(22);
    for case in 0..50 {
        let (i, h) = (r.random_range(2..40), r.random_range(1..30));
        let d = r.random_range(1..i.min(9));
        let p = random_params(&mut r, i, h, d);
        let z: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let got = decoder_forward(&p, &z).unwrap();
        let want = common::ref_decoder(&p, &z);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
            assert!(*a > 0.0 && *a < 1.0);
        }
    }
}

#[test]
fn weighted_loss_matches_reference() {
    let mut r = rng::seeded(23);
    for _ in 0..30 {
        let p = random_params(&mut r, 12, 7, 3);
        let x: Vec<f64> = (0..12).map(|_| r.random_range(0.0..1.0)).collect();
        let mask: Vec<bool> = (0..12).map(|_| r.random_bool(0.6)).collect();
        let eps = rng::standard_normal_vec(&mut r, 3);
        let v = SlotVector {
            slot_index: 0,
            x: x.clone(),
            mask: mask.clone(),
        };
        for beta in [1.0, 0.01, 0.37] {
            let got = weighted_loss_with_eps(&p, &v, &eps, beta).unwrap().loss.total;
            let want = common::ref_loss(&p, &x, &mask, &eps, beta);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
        let plain = total_loss_with_eps(&p, &v, &eps).unwrap().loss;
        assert_eq!(plain.kl_weight, 1.0);
        assert_eq!(plain.total, plain.recon + plain.kl);
    }
}

#[test]
fn loss_is_finite_for_extreme_params() {
    let mut r = rng::seeded(24);
    for _ in 0..200 {
        let mut p = init_params(9, 6, 3, r.random()).unwrap();
        let scale = 10f64.powi(r.random_range(0..6));
        for b in p.blocks_mut() {
            b.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0) * scale);
        }
        let v = SlotVector {
            slot_index: 0,
            x: (0..9).map(|_| r.random_range(0.0..1.0)).collect(),
            mask: vec![true; 9],
        };
        let fwd = total_loss(&p, &v, &mut r).unwrap();
        assert!(fwd.loss.total.is_finite(), "scale {scale}");
        assert!(fwd.loss.kl >= 0.0 && fwd.loss.recon >= 0.0);
        assert!(fwd.encoder.logvar.iter().all(|lv| (-10.0..=10.0).contains(lv)));
        assert!(backward(&p, &v, &fwd).unwrap().is_finite());
    }
}

#[test]
fn same_seed_same_loss_and_gradient_bits() {
    let p = init_params(10, 6, 3, 4).unwrap();
    let v = SlotVector {
        slot_index: 0,
        x: (0..10).map(|i| i as f64 / 10.0).collect(),
        mask: (0..10).map(|i| i % 3 != 0).collect(),
    };
    let a = total_loss(&p, &v, &mut rng::seeded(8)).unwrap();
    let b = total_loss(&p, &v, &mut rng::seeded(8)).unwrap();
    assert_eq!(a.loss.total.to_bits(), b.loss.total.to_bits());
    assert_eq!(backward(&p, &v, &a).unwrap(), backward(&p, &v, &b).unwrap());
}

fn flatten(blocks: [&[f64]; 10]) -> Vec<f64> {
    blocks.iter().flat_map(|b| b.iter().copied()).collect()
}

#[test]
fn adam_matches_flat_reference_bit_exactly() {
    let mut p = init_params(8, 5, 2, 1).unwrap();
    let mut state = AdamState::new(&p);
    let cfg = AdamConfig {
        lr: 3e-3,
        ..AdamConfig::default()
    };
    let mut theta = flatten(p.blocks());
    let mut reference = common::FlatAdam::new(theta.len());
    let mut r = rng::seeded(5);
    for step in 0..100 {
        let mut g = VaeGradients::zeros_like(&p);
        for b in g.blocks_mut() {
            b.iter_mut().for_each(|v| {
                *v = if r.random_bool(0.1) { 0.0 } else { r.random_range(-2.0..2.0) * 10f64.powi(r.random_range(-6..3)) }
            });
        }
        adam_step(&mut p, &g, &mut state, &cfg).unwrap();
        reference.step(&mut theta, &flatten(g.blocks()), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
        let got = flatten(p.blocks());
        for (a, b) in got.iter().zip(&theta) {
            assert_eq!(a.to_bits(), b.to_bits(), "step {step}");
        }
        assert_eq!(flatten(state.m.blocks()), reference.m);
        assert_eq!(flatten(state.v.blocks()), reference.v);
    }
    assert_eq!(state.step, 100);
}

#[test]
fn full_batch_adam_halves_fixed_eps_loss() {
    let mut r = rng::seeded(30);
    let batch: Vec<SlotVector> = (0..40)
        .map(|m| {
            let phase = m as f64 / 40.0;
            SlotVector {
                slot_index: m,
                x: (0..12).map(|i| 0.5 + 0.4 * (std::f64::consts::TAU * (phase + i as f64 / 12.0)).sin()).collect(),
                mask: (0..12).map(|_| r.random_bool(0.5)).collect(),
            }
        })
        .collect();
    let eps: Vec<Vec<f64>> = batch.iter().map(|_| rng::standard_normal_vec(&mut r, 3)).collect();
    let mut p = init_params(12, 16, 3, 2).unwrap();
    let mut state = AdamState::new(&p);
    let mean_loss = |p: &VaeParams| -> (f64, VaeGradients) {
        let mut g = VaeGradients::zeros_like(p);
        let mut total = 0.0;
        for (v, e) in batch.iter().zip(&eps) {
            let f = total_loss_with_eps(p, v, e).unwrap();
            total += f.loss.total;
            accumulate_backward(p, v, &f, &mut g).unwrap();
        }
        g.scale(1.0 / batch.len() as f64);
        (total / batch.len() as f64, g)
    };
    let (initial, _) = mean_loss(&p);
    for _ in 0..200 {
        let (_, g) = mean_loss(&p);
        adam_step(&mut p, &g, &mut state, &AdamConfig::default()).unwrap();
    }
    let (last, _) = mean_loss(&p);
    assert!(last <= 0.5 * initial, "{initial} -> {last}");
}
