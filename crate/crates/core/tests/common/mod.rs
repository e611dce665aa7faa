//! Reference implementations the library is checked against, plus shared fixtures.
#![allow(dead_code)]

use std::path::PathBuf;

use driftline_core::nn::{Example, MultiHeadRegressor, Trainable};
use driftline_core::novelty::BlockRole;
use driftline_core::orchestrator::{ClearInstance, InstanceConfig};
use driftline_core::streams::{SyntheticConfig, SyntheticStream};
use driftline_core::{RawSample, Sample};

pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of `loss` over the trainable parameters.
pub fn fd_gradient<M: Trainable + ?Sized>(model: &mut M, batch: &[Example]) -> Vec<f64> {
    let base = model.trainable_params();
    let mut grad = Vec::with_capacity(base.len());
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + FD_STEP;
        model.set_trainable_params(&p).unwrap();
        let up = model.loss(batch).unwrap();
        p[i] = base[i] - FD_STEP;
        model.set_trainable_params(&p).unwrap();
        let down = model.loss(batch).unwrap();
        p[i] = base[i];
        grad.push((up - down) / (2.0 * FD_STEP));
    }
    model.set_trainable_params(&base).unwrap();
    grad
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| rel_error(*x, *y)).fold(0.0, f64::max)
}

/// Column-wise min and max over every row, computed from scratch.
pub fn refit_min_max(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let width = rows[0].len();
    (0..width)
        .map(|j| {
            let col = rows.iter().map(|r| r[j]);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect()
}

/// Column-wise mean and population variance, two-pass.
pub fn refit_moments(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let width = rows[0].len();
    let n = rows.len() as f64;
    (0..width)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            (mean, var)
        })
        .collect()
}

/// Quantile by full sort and linear interpolation at `q * (n - 1)`.
pub fn sort_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Per-sample squared error or reconstruction MSE, averaged in a plain loop.
pub fn loop_batch_score(model: &MultiHeadRegressor, role: &BlockRole, samples: &[Sample]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        total += match role {
            BlockRole::Autoencoder => {
                let r = model.reconstruct(&s.x).unwrap();
                r.iter().zip(&s.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / s.x.len() as f64
            }
            BlockRole::Predictor { target } => {
                let p = model.predict(target, &s.x).unwrap();
                (p - s.target(target).unwrap()).powi(2)
            }
        };
    }
    total / samples.len() as f64
}

/// Diagonal Fisher from per-sample finite-difference gradients.
pub fn loop_fisher<M: Trainable + ?Sized>(model: &mut M, batch: &[Example]) -> Vec<f64> {
    let mut acc = vec![0.0; model.trainable_params().len()];
    for ex in batch {
        let g = fd_gradient(model, std::slice::from_ref(ex));
        for (a, gi) in acc.iter_mut().zip(g) {
            *a += gi * gi;
        }
    }
    acc.iter().map(|a| a / batch.len() as f64).collect()
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn small_config(stream: &SyntheticStream, seed: u64) -> InstanceConfig {
    InstanceConfig {
        features: stream.feature_names(),
        targets: stream.target_names(),
        pretrain: driftline_core::nn::TrainConfig {
            epochs: 30,
            learning_rate: 0.01,
            ..Default::default()
        },
        novelty_capacity: 16,
        seed,
        ..InstanceConfig::default()
    }
}

/// A bootstrapped instance and the stream it was warmed up from.
pub fn synthetic_instance(
    seed: u64,
    tweak: impl FnOnce(&mut InstanceConfig),
) -> (ClearInstance, SyntheticStream) {
    let mut stream = SyntheticStream::new(SyntheticConfig::default(), seed).unwrap();
    let warm: Vec<RawSample> = stream.take(200);
    let mut cfg = small_config(&stream, seed);
    tweak(&mut cfg);
    (ClearInstance::bootstrap(cfg, &warm).unwrap(), stream)
}
