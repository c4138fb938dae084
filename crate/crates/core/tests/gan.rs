mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use decfine::ccwgan::{gradient_penalty, train_step, GanConfig, GanNets, ObsReplayBuffer};
use decfine::env::JointLayout;
use decfine::nn::{AdamConfig, Mlp, MlpShape, OutputActivation};

#[test]
fn penalty_uses_the_true_input_gradient_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let d = Mlp::init(&MlpShape::three_layer(6, 16, 1, OutputActivation::Linear), &mut rng);
        let real = random_matrix(&mut rng, 5, 6, 1.0);
        let fake = random_matrix(&mut rng, 5, 6, 1.0);
        let eps: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let (value, _) = gradient_penalty(&d, real.view(), fake.view(), &eps).unwrap();
        let mut expected = 0.0;
        for r in 0..5 {
            let x: Vec<f64> = (0..6)
                .map(|k| eps[r] * real[[r, k]] + (1.0 - eps[r]) * fake[[r, k]])
                .collect();
            let mut sq = 0.0;
            for k in 0..6 {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[k] += 1e-6;
                lo[k] -= 1e-6;
                let g = (d.predict(&hi)[0] - d.predict(&lo)[0]) / 2e-6;
                sq += g * g;
            }
            expected += (sq.sqrt() - 1.0).powi(2) / 5.0;
        }
        assert!((value - expected).abs() < 1e-3, "{value} vs {expected}");
    }
}

#[test]
fn constant_data_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = JointLayout::uniform(3, 2);
    let target = vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.4];
    let mut buffer = ObsReplayBuffer::new(1);
    buffer.push(target.clone());
    let cfg = GanConfig {
        batch_size: 32,
        hidden: 32,
        generator_adam: AdamConfig::with_lr(1e-3),
        discriminator_adam: AdamConfig::with_lr(1e-3),
        ..GanConfig::default()
    };
    let mut nets = GanNets::new(l.total_len(), cfg.hidden, &mut rng);
    for _ in 0..1500 {
        train_step(&mut nets, &buffer, &l, &cfg, &mut rng);
    }
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = decfine::ccwgan::mask_random(&target, &l, &mut rng);
        let (inferred, _) = nets.infer(&s.partial, &s.mask);
        for k in 0..target.len() {
            worst = worst.max((inferred[k] - target[k]).abs());
        }
    }
    assert!(worst < 0.1, "max deviation {worst}");
}

#[test]
fn correlated_slices_are_inferred_better_than_noise() {
    let score = gaussian_inference(2000, 3);
    assert!(score.gan < 0.75 * score.noise, "{score:?}");
}

#[test]
fn training_on_empty_buffer_is_skipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = JointLayout::uniform(2, 2);
    let mut nets = GanNets::new(4, 8, &mut rng);
    let before = nets.clone();
    let m = train_step(&mut nets, &ObsReplayBuffer::new(4), &l, &GanConfig::default(), &mut rng);
    assert!(m.skipped);
    assert_eq!(nets, before);
}
