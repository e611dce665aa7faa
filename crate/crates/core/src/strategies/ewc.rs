//! Diagonal empirical-Fisher quadratic penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Example, Regularizer, Trainable};

/// Per-parameter importance over a model's trainable parameter vector,
/// together with the parameter values it was computed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub importance: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl FisherInfo {
    pub fn len(&self) -> usize {
        self.importance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.importance.is_empty()
    }
}

/// `F_i = mean over the batch of (dL_s/d theta_i)^2`, `L_s` the per-sample MSE.
pub fn compute_fisher<M: Trainable + ?Sized>(model: &M, batch: &[Example]) -> Result<FisherInfo> {
    if batch.is_empty() {
        return Err(Error::argument("Fisher information of an empty batch"));
    }
    let anchor = model.trainable_params();
    let mut importance = vec![0.0; anchor.len()];
    for example in batch {
        let (_, grad) = model.loss_and_grad(std::slice::from_ref(example))?;
        for (f, g) in importance.iter_mut().zip(&grad) {
            *f += g * g;
        }
    }
    let n = batch.len() as f64;
    importance.iter_mut().for_each(|f| *f /= n);
    Ok(FisherInfo { importance, anchor })
}

/// `base_loss + (lambda / 2) * sum_i F_i (theta_i - anchor_i)^2`
pub fn penalized_loss(base_loss: f64, params: &[f64], fisher: &FisherInfo, lambda: f64) -> Result<f64> {
    if params.len() != fisher.len() || fisher.anchor.len() != fisher.len() {
        return Err(Error::shape(format!(
            "{} parameters against Fisher information of size {}",
            params.len(),
            fisher.len()
        )));
    }
    Ok(base_loss + penalty_value(params, fisher, lambda))
}

fn penalty_value(params: &[f64], fisher: &FisherInfo, lambda: f64) -> f64 {
    let sum: f64 = params
        .iter()
        .zip(&fisher.anchor)
        .zip(&fisher.importance)
        .map(|((p, a), f)| f * (p - a) * (p - a))
        .sum();
    0.5 * lambda * sum
}

pub struct EwcPenalty<'a> {
    pub fisher: &'a FisherInfo,
    pub lambda: f64,
}

impl Regularizer for EwcPenalty<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        penalty_value(params, self.fisher, self.lambda)
    }

    fn add_gradient(&self, params: &[f64], grad: &mut [f64]) {
        for (((g, p), a), f) in grad
            .iter_mut()
            .zip(params)
            .zip(&self.fisher.anchor)
            .zip(&self.fisher.importance)
        {
            *g += self.lambda * f * (p - a);
        }
    }
}
