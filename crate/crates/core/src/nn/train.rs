//! Mini-batch training over anything that exposes a flat parameter vector.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{DenseNet, Example};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::validation("learning_rate must be positive and finite"));
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::validation(
                    "adam requires beta1, beta2 in [0, 1) and epsilon > 0",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_loss: f64,
    pub epochs_run: usize,
    /// Wall-clock seconds.
    pub elapsed_time: f64,
}

/// A model whose trainable parameters can be read and written as one flat vector.
pub trait Trainable {
    fn trainable_params(&self) -> Vec<f64>;

    fn set_trainable_params(&mut self, params: &[f64]) -> Result<()>;

    /// Mean MSE over the batch and its gradient with respect to the trainable parameters.
    fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, batch: &[Example]) -> Result<f64>;
}

impl Trainable for DenseNet {
    fn trainable_params(&self) -> Vec<f64> {
        self.params().to_vec()
    }

    fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        self.set_params(params)
    }

    fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_gradients(batch)
    }

    fn loss(&self, batch: &[Example]) -> Result<f64> {
        self.mse(batch)
    }
}

/// Extra loss term over the trainable parameter vector.
pub trait Regularizer {
    fn value(&self, params: &[f64]) -> f64;

    fn add_gradient(&self, params: &[f64], grad: &mut [f64]);
}

/// Produces the mini-batches for one epoch.
pub trait BatchSource {
    fn epoch_batches(&mut self, rng: &mut ChaCha8Rng) -> Vec<Vec<Example>>;
}

/// Shuffles a fixed dataset each epoch and cuts it into mini-batches.
pub struct ShuffledBatches<'a> {
    data: &'a [Example],
    batch_size: usize,
}

impl<'a> ShuffledBatches<'a> {
    pub fn new(data: &'a [Example], batch_size: usize) -> Self {
        Self { data, batch_size }
    }
}

impl BatchSource for ShuffledBatches<'_> {
    fn epoch_batches(&mut self, rng: &mut ChaCha8Rng) -> Vec<Vec<Example>> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(rng);
        order
            .chunks(self.batch_size)
            .map(|chunk| chunk.iter().map(|&i| self.data[i].clone()).collect())
            .collect()
    }
}

enum OptimizerState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, size: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m: vec![0.0; size],
                v: vec![0.0; size],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m,
                v,
                t,
            } => {
                *t += 1;
                let bias1 = 1.0 - beta1.powi(*t);
                let bias2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + *epsilon);
                }
            }
        }
    }
}

/// Trains on shuffled mini-batches of `data` and reports the final full-data MSE.
pub fn train<M: Trainable + ?Sized>(
    model: &mut M,
    data: &[Example],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let mut source = ShuffledBatches::new(data, config.batch_size.max(1));
    train_with(model, &mut source, data, config, None)
}

/// General training loop.
///
/// `eval_data` is used for the reported loss (without the regularizer).
/// Fails with [`Error::Divergence`] on the first non-finite batch loss or
/// parameter, leaving the model in its last finite state.
pub fn train_with<M: Trainable + ?Sized>(
    model: &mut M,
    source: &mut dyn BatchSource,
    eval_data: &[Example],
    config: &TrainConfig,
    regularizer: Option<&dyn Regularizer>,
) -> Result<TrainReport> {
    config.validate()?;
    let start = Instant::now();
    if config.epochs > 0 && eval_data.is_empty() {
        return Err(Error::argument("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.trainable_params();
    let mut optimizer = OptimizerState::new(config.optimizer, params.len());

    for epoch in 0..config.epochs {
        for batch in source.epoch_batches(&mut rng) {
            if batch.is_empty() {
                continue;
            }
            let (mut loss, mut grad) = model.loss_and_grad(&batch)?;
            if let Some(reg) = regularizer {
                loss += reg.value(&params);
                reg.add_gradient(&params, &mut grad);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, loss });
            }
            let previous = params.clone();
            optimizer.step(&mut params, &grad, config.learning_rate);
            if params.iter().any(|p| !p.is_finite()) {
                model.set_trainable_params(&previous)?;
                return Err(Error::Divergence { epoch, loss });
            }
            model.set_trainable_params(&params)?;
        }
    }

    let final_loss = if eval_data.is_empty() {
        0.0
    } else {
        model.loss(eval_data)?
    };
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs.saturating_sub(1),
            loss: final_loss,
        });
    }
    Ok(TrainReport {
        final_loss,
        epochs_run: config.epochs,
        elapsed_time: start.elapsed().as_secs_f64(),
    })
}
