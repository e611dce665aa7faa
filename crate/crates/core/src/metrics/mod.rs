//! Regression errors, forgetting ratio, and the fused continual-learning score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionErrors {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

pub fn regression_errors(predictions: &[f64], truths: &[f64]) -> Result<RegressionErrors> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::argument(format!(
            "need equal non-zero lengths, got {} predictions and {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let n = predictions.len() as f64;
    let (sq, abs) = predictions
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(sq, abs), (p, t)| {
            let d = p - t;
            (sq + d * d, abs + d.abs())
        });
    let mse = sq / n;
    Ok(RegressionErrors {
        mse,
        rmse: mse.sqrt(),
        mae: abs / n,
    })
}

/// Relative error increase on the retained set.
///
/// Negative values mean the update improved retained performance. Returns
/// `None` (undefined) when the error rises from exactly zero.
pub fn forgetting_ratio(retained_before: f64, retained_after: f64) -> Result<Option<f64>> {
    if !(retained_before >= 0.0) || !(retained_after >= 0.0) {
        return Err(Error::argument(format!(
            "retained errors must be >= 0, got {retained_before} and {retained_after}"
        )));
    }
    if retained_before == 0.0 {
        return Ok(if retained_after == 0.0 { Some(0.0) } else { None });
    }
    Ok(Some((retained_after - retained_before) / retained_before))
}

pub const COMPONENT_KEYS: [&str; 6] = [
    "accuracy",
    "forward_transfer",
    "backward_transfer",
    "model_size_efficiency",
    "sample_storage_efficiency",
    "compute_efficiency",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClScore {
    pub components: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub fused: f64,
}

/// Weighted sum of `[0, 1]` components; weights must be nonnegative and sum to 1.
pub fn cl_score(
    components: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<ClScore> {
    if components.keys().ne(weights.keys()) {
        return Err(Error::validation("components and weights must have the same keys"));
    }
    for (k, &c) in components {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::validation(format!("component `{k}` = {c} is outside [0, 1]")));
        }
    }
    for (k, &w) in weights {
        if !(w >= 0.0) {
            return Err(Error::validation(format!("weight `{k}` = {w} is negative")));
        }
    }
    let sum: f64 = weights.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("weights sum to {sum}, expected 1")));
    }
    let fused = components
        .iter()
        .map(|(k, c)| c * weights[k])
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(ClScore {
        components: components.clone(),
        weights: weights.clone(),
        fused,
    })
}

pub fn equal_weights() -> BTreeMap<String, f64> {
    let w = 1.0 / COMPONENT_KEYS.len() as f64;
    COMPONENT_KEYS.iter().map(|k| (k.to_string(), w)).collect()
}

/// Mappings of raw run statistics onto `[0, 1]` score components.
pub mod components {
    pub fn accuracy(mse: f64) -> f64 {
        1.0 / (1.0 + mse.max(0.0))
    }

    pub fn sample_storage_efficiency(stored: usize, ingested: usize) -> f64 {
        if ingested == 0 {
            return 1.0;
        }
        (1.0 - stored as f64 / ingested as f64).clamp(0.0, 1.0)
    }

    pub fn compute_efficiency(budget_seconds: f64, actual_seconds: f64) -> f64 {
        if actual_seconds <= 0.0 {
            return 1.0;
        }
        (budget_seconds / actual_seconds).clamp(0.0, 1.0)
    }

    pub fn model_size_efficiency(base_params: usize, current_params: usize) -> f64 {
        if current_params == 0 {
            return 1.0;
        }
        (base_params as f64 / current_params as f64).clamp(0.0, 1.0)
    }

    /// Relative error reduction on the new data.
    pub fn forward_transfer(novel_before: f64, novel_after: f64) -> f64 {
        if novel_before <= 0.0 {
            return 0.0;
        }
        ((novel_before - novel_after) / novel_before).clamp(0.0, 1.0)
    }

    /// One minus the forgetting ratio; improvements saturate at 1.
    pub fn backward_transfer(forgetting_ratio: Option<f64>) -> f64 {
        match forgetting_ratio {
            Some(r) => (1.0 - r).clamp(0.0, 1.0),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockEval {
    /// Error on the data the block was last trained on.
    pub fitting_error: Option<f64>,
    /// Mean score on stream samples seen after the last accepted update.
    pub prediction_error: Option<f64>,
    pub forgetting_ratio: Option<f64>,
    pub training_time: f64,
    pub updates_proposed: usize,
    pub updates_accepted: usize,
    pub updates_rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub blocks: BTreeMap<String, BlockEval>,
    pub cl_score: Option<ClScore>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "block,fitting_error,prediction_error,forgetting_ratio,training_time,updates_proposed,updates_accepted,updates_rejected\n",
        );
        for (id, b) in &self.blocks {
            let _ = writeln!(
                out,
                "{id},{},{},{},{:.6},{},{},{}",
                cell(b.fitting_error),
                cell(b.prediction_error),
                cell(b.forgetting_ratio),
                b.training_time,
                b.updates_proposed,
                b.updates_accepted,
                b.updates_rejected
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<14} {:>12} {:>12} {:>12} {:>10} {:>5} {:>5} {:>5}\n",
            "block", "fit_err", "pred_err", "forget", "train_s", "prop", "acc", "rej"
        );
        for (id, b) in &self.blocks {
            let _ = writeln!(
                out,
                "{:<14} {:>12} {:>12} {:>12} {:>10.3} {:>5} {:>5} {:>5}",
                id,
                cell(b.fitting_error),
                cell(b.prediction_error),
                cell(b.forgetting_ratio),
                b.training_time,
                b.updates_proposed,
                b.updates_accepted,
                b.updates_rejected
            );
        }
        if let Some(score) = &self.cl_score {
            let _ = writeln!(out, "\nCL score: {:.4}", score.fused);
            for (k, c) in &score.components {
                let _ = writeln!(out, "  {k:<26} {c:.4} (weight {:.3})", score.weights[k]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn error_examples() {
        let e = regression_errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((e.mse, e.rmse, e.mae), (0.0, 0.0, 0.0));
        let e = regression_errors(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!((e.mse, e.rmse, e.mae), (1.0, 1.0, 1.0));
        let e = regression_errors(&[0.5], &[1.0]).unwrap();
        assert_eq!((e.mse, e.rmse, e.mae), (0.25, 0.5, 0.5));
    }

    #[test]
    fn error_arguments() {
        assert!(regression_errors(&[], &[]).is_err());
        assert!(regression_errors(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn forgetting_examples() {
        assert!((forgetting_ratio(0.10, 0.12).unwrap().unwrap() - 0.2).abs() < 1e-12);
        assert!((forgetting_ratio(0.10, 0.08).unwrap().unwrap() + 0.2).abs() < 1e-12);
        assert_eq!(forgetting_ratio(0.0, 0.0).unwrap(), Some(0.0));
        assert_eq!(forgetting_ratio(0.0, 0.1).unwrap(), None);
        assert!(forgetting_ratio(-1.0, 0.1).is_err());
    }

    #[test]
    fn fused_score_examples() {
        let s = cl_score(&map(&[("a", 0.8), ("b", 0.5)]), &map(&[("a", 0.5), ("b", 0.5)])).unwrap();
        assert!((s.fused - 0.65).abs() < 1e-12);
        let ones: BTreeMap<String, f64> = COMPONENT_KEYS.iter().map(|k| (k.to_string(), 1.0)).collect();
        assert!((cl_score(&ones, &equal_weights()).unwrap().fused - 1.0).abs() < 1e-12);
        assert!(cl_score(&map(&[("a", 0.8)]), &map(&[("a", 0.9)])).is_err());
        assert!(cl_score(&map(&[("a", 1.2)]), &map(&[("a", 1.0)])).is_err());
        assert!(cl_score(&map(&[("a", 0.2)]), &map(&[("b", 1.0)])).is_err());
    }

    #[test]
    fn component_mappings_stay_in_unit_interval() {
        use components::*;
        assert_eq!(accuracy(0.0), 1.0);
        assert_eq!(sample_storage_efficiency(10, 100), 0.9);
        assert_eq!(compute_efficiency(1.0, 4.0), 0.25);
        assert_eq!(compute_efficiency(10.0, 4.0), 1.0);
        assert!((forward_transfer(0.2, 0.05) - 0.75).abs() < 1e-12);
        assert_eq!(forward_transfer(0.2, 0.4), 0.0);
        assert_eq!(backward_transfer(Some(-0.3)), 1.0);
        assert_eq!(backward_transfer(Some(0.25)), 0.75);
        assert_eq!(model_size_efficiency(100, 200), 0.5);
    }

    #[test]
    fn report_tables() {
        let mut r = EvalReport::default();
        r.blocks.insert(
            "p_1".into(),
            BlockEval {
                fitting_error: Some(0.01),
                ..BlockEval::default()
            },
        );
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("p_1,0.010000,-,-"));
        assert!(r.to_text().contains("p_1"));
    }
}
