use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Novel,
    Familiar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adaptation {
    /// `value <- alpha * quantile_q(post-update scores)`
    Quantile { q: f64, alpha: f64 },
    Fixed,
}

impl Default for Adaptation {
    fn default() -> Self {
        Adaptation::Quantile { q: 0.95, alpha: 1.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    #[serde(default)]
    pub adaptation: Adaptation,
}

impl Threshold {
    pub fn new(value: f64, adaptation: Adaptation) -> Result<Self> {
        let t = Self { value, adaptation };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value >= 0.0) || !self.value.is_finite() {
            return Err(Error::validation(format!(
                "threshold must be finite and >= 0, got {}",
                self.value
            )));
        }
        if let Adaptation::Quantile { q, alpha } = self.adaptation {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::validation(format!("quantile q must lie in [0, 1], got {q}")));
            }
            if !(alpha >= 0.0) || !alpha.is_finite() {
                return Err(Error::validation(format!("alpha must be >= 0, got {alpha}")));
            }
        }
        Ok(())
    }

    /// Novel iff `score > value`; a tie is familiar.
    pub fn classify(&self, score: f64) -> Result<Classification> {
        classify(score, self)
    }

    /// Adapts the threshold to the scores of the just-learned samples.
    /// Returns `None` when there is nothing to adapt to (no scores or a fixed rule).
    pub fn adjusted(&self, post_update_scores: &[f64]) -> Option<Threshold> {
        match self.adaptation {
            Adaptation::Fixed => None,
            Adaptation::Quantile { q, alpha } => {
                let value = alpha * quantile(post_update_scores, q)?;
                Some(Threshold {
                    value: value.max(0.0),
                    adaptation: self.adaptation,
                })
            }
        }
    }
}

pub fn classify(score: f64, threshold: &Threshold) -> Result<Classification> {
    if score < 0.0 || score.is_nan() {
        return Err(Error::argument(format!("novelty score must be >= 0, got {score}")));
    }
    Ok(if score > threshold.value {
        Classification::Novel
    } else {
        Classification::Familiar
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `q * (n - 1)` in the sorted sample). `None` for empty input.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut lower, upper) = v.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 {
        return Some(lower);
    }
    let next = upper.iter().copied().min_by(f64::total_cmp).unwrap_or(lower);
    Some(lower + frac * (next - lower))
}
