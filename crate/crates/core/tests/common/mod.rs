//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use contimo::model::ArchConfig;
use contimo::motion::{Channel, Joint};
use contimo::{Graph, NodeId, ParamStore, Result, Skeleton, Tensor, TrainConfig};
use rand::Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Largest relative error, over parameters, between the analytic gradient
/// of `build` and central differences. Per parameter the error is
/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` (zero when both
/// vanish).
pub fn gradient_error<F>(params: &ParamStore, build: F) -> f64
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, params).unwrap();
    let analytic = g.gradient(loss).unwrap();
    let eval = |p: &ParamStore| {
        let mut g = Graph::new();
        let l = build(&mut g, p).unwrap();
        g.value(l).item()
    };
    let mut worst = 0.0f64;
    for (name, value) in params.iter() {
        let a = analytic.get(name).unwrap_or_else(|| panic!("no gradient for {name}"));
        let mut numeric = vec![0.0; value.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += FD_STEP;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= FD_STEP;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        }
        let e = relative_error(a.data(), &numeric);
        worst = worst.max(e);
    }
    worst
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).unwrap()
}

/// Channel `c` of the synthetic overfit fixture at fractional frame `x`:
/// two sinusoids whose frequencies differ per channel.
pub fn fixture_signal(c: usize, x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let f1 = 1.0 + 0.5 * c as f64;
    let f2 = 2.3 + 0.4 * c as f64;
    (tau * f1 * x / 59.0 + 0.3 * c as f64).sin() + 0.5 * (tau * f2 * x / 59.0 + 1.1).cos()
}

pub const FIXTURE_FRAMES: usize = 60;
pub const FIXTURE_DIM: usize = 6;

pub fn fixture_sequence() -> contimo::MotionSequence {
    let rows: Vec<Vec<f64>> = (0..FIXTURE_FRAMES)
        .map(|i| (0..FIXTURE_DIM).map(|c| fixture_signal(c, i as f64)).collect())
        .collect();
    contimo::MotionSequence::from_rows(&rows, 30.0).unwrap()
}

/// Model used by the synthetic-fixture experiments.
pub fn fixture_arch(harmonics: usize, share_activations: bool, seed: u64) -> ArchConfig {
    ArchConfig {
        scales: 3,
        harmonics,
        latent: 32,
        token_dim: 8,
        clip_frames: 5,
        encoder_hidden: 64,
        encoder_hidden_layers: 2,
        latent_hidden_layers: 1,
        decoder_hidden: 64,
        decoder_layers: 4,
        share_activations,
        first_omega: 0.3,
        seed,
        ..ArchConfig::default()
    }
}

/// 1000 steps of 64 queries at a fixed degradation factor of 2, halving
/// the learning rate every 250 steps.
pub fn fixture_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 100,
        steps_per_epoch: 10,
        decay_every: 25,
        min_factor: 2.0,
        max_factor: 2.0,
        seed,
        ..TrainConfig::default()
    }
}

/// A chain of joints, each the child of the one before, with ZXY rotation
/// channels below the root.
pub fn chain(offsets: &[[f64; 3]], root_channels: Vec<Channel>) -> Skeleton {
    let rot = vec![Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];
    let joints = offsets
        .iter()
        .enumerate()
        .map(|(i, &offset)| Joint {
            name: format!("j{i}"),
            parent: if i == 0 { None } else { Some(i - 1) },
            offset,
            channels: if i == 0 { root_channels.clone() } else { rot.clone() },
            end_site: None,
        })
        .collect();
    Skeleton::new(joints).unwrap()
}

pub fn root_channels() -> Vec<Channel> {
    use Channel::*;
    vec![Xposition, Yposition, Zposition, Zrotation, Xrotation, Yrotation]
}

/// Random channel values: angles in degrees, positions within ±20.
pub fn random_row(rng: &mut impl Rng, sk: &Skeleton) -> Vec<f64> {
    sk.joints()
        .iter()
        .flat_map(|j| j.channels.clone())
        .map(|c| if c.is_rotation() { rng.gen_range(-180.0..180.0) } else { rng.gen_range(-20.0..20.0) })
        .collect()
}

