use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::novelty::Adaptation;
use crate::strategies::{StrategySpec, UpdateResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    RollbackTo { version: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    #[default]
    Operator,
    AutoPolicy,
}

/// One hyperparameter change on one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterEdit {
    pub block: String,
    #[serde(flatten)]
    pub change: HyperparameterChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "value", rename_all = "snake_case")]
pub enum HyperparameterChange {
    Threshold(f64),
    Adaptation(Adaptation),
    NoveltyCapacity(usize),
    FamiliarityCap(Option<usize>),
    Strategy(StrategySpec),
}

impl HyperparameterChange {
    pub fn field(&self) -> &'static str {
        match self {
            HyperparameterChange::Threshold(_) => "threshold",
            HyperparameterChange::Adaptation(_) => "adaptation",
            HyperparameterChange::NoveltyCapacity(_) => "novelty_capacity",
            HyperparameterChange::FamiliarityCap(_) => "familiarity_cap",
            HyperparameterChange::Strategy(_) => "strategy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HyperparameterChange::Threshold(v) if !(*v >= 0.0) || !v.is_finite() => Err(
                Error::validation(format!("threshold must be finite and >= 0, got {v}")),
            ),
            HyperparameterChange::Adaptation(Adaptation::Quantile { q, alpha })
                if !(0.0..=1.0).contains(q) || !(*alpha > 0.0) || !alpha.is_finite() =>
            {
                Err(Error::validation(format!(
                    "quantile adaptation needs q in [0, 1] and alpha > 0, got q={q} alpha={alpha}"
                )))
            }
            HyperparameterChange::NoveltyCapacity(0) => {
                Err(Error::validation("novelty capacity must be at least 1"))
            }
            HyperparameterChange::FamiliarityCap(Some(0)) => {
                Err(Error::validation("familiarity cap must be at least 1"))
            }
            HyperparameterChange::Strategy(s) => s.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Required for accept and reject.
    #[serde(default)]
    pub update_id: Option<u64>,
    pub verdict: Verdict,
    #[serde(default)]
    pub issued_by: DecisionSource,
    #[serde(default)]
    pub note: Option<String>,
    /// Applied after the verdict.
    #[serde(default)]
    pub edits: Vec<HyperparameterEdit>,
}

impl Decision {
    pub fn accept(update_id: u64) -> Self {
        Self::verdict(Some(update_id), Verdict::Accept)
    }

    pub fn reject(update_id: u64) -> Self {
        Self::verdict(Some(update_id), Verdict::Reject)
    }

    pub fn rollback(version: u64) -> Self {
        Self::verdict(None, Verdict::RollbackTo { version })
    }

    fn verdict(update_id: Option<u64>, verdict: Verdict) -> Self {
        Self {
            update_id,
            verdict,
            issued_by: DecisionSource::Operator,
            note: None,
            edits: Vec::new(),
        }
    }
}

/// Automatic decisions for unattended runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoPolicy {
    pub enabled: bool,
    /// Largest forgetting ratio still accepted.
    pub max_forgetting: f64,
}

impl Default for AutoPolicy {
    fn default() -> Self {
        Self {
            enabled: false,
            max_forgetting: 0.1,
        }
    }
}

impl AutoPolicy {
    /// Accepts iff the novel error dropped and forgetting stays within
    /// bounds. An undefined forgetting ratio is rejected.
    pub fn decide(&self, result: &UpdateResult) -> Verdict {
        let improved = result.errors.novel_after < result.errors.novel_before;
        let bounded = matches!(result.forgetting_ratio, Some(r) if r <= self.max_forgetting);
        if improved && bounded {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}
