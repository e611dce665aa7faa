use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::COMPONENT_KEYS;
use crate::nn::{ArchitectureConfig, TrainConfig};
use crate::novelty::{Adaptation, Threshold};
use crate::preprocess::PreprocessConfig;
use crate::strategies::{StrategyKind, StrategySpec};

use super::decision::AutoPolicy;

/// Block id of the shared autoencoder. Predictor blocks use their target name.
pub const AUTOENCODER_BLOCK: &str = "autoencoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    /// Every block buffers every sample it scores.
    #[default]
    Independent,
    /// Predictor blocks skip samples the autoencoder classified as novel.
    AutoencoderGated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceConfig {
    pub features: Vec<String>,
    pub targets: Vec<String>,
    pub architecture: ArchitectureConfig,
    pub preprocess: PreprocessConfig,
    pub novelty_capacity: usize,
    pub familiarity_cap: Option<usize>,
    /// Size of the per-block reservoir that forgetting is measured on.
    pub retained_size: usize,
    /// Used when a block has no calibration data or a fixed threshold.
    pub initial_threshold: f64,
    pub adaptation: Adaptation,
    pub autoencoder_strategy: StrategySpec,
    pub predictor_strategy: StrategySpec,
    /// Serve a triggered autoencoder block before any predictor block.
    pub upstream_first: bool,
    pub routing: Routing,
    pub pretrain: TrainConfig,
    pub auto_policy: AutoPolicy,
    /// Training seconds per update that still count as fully efficient.
    pub compute_budget_seconds: f64,
    /// Fused-score weights; equal when absent.
    pub score_weights: Option<BTreeMap<String, f64>>,
    /// Upper bound on predictor heads, including ones added later.
    pub max_heads: usize,
    pub seed: u64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            features: Vec::new(),
            targets: Vec::new(),
            architecture: ArchitectureConfig::default(),
            preprocess: PreprocessConfig::default(),
            novelty_capacity: 64,
            familiarity_cap: None,
            retained_size: 256,
            initial_threshold: 0.01,
            adaptation: Adaptation::default(),
            autoencoder_strategy: StrategySpec::default(),
            predictor_strategy: StrategySpec::default(),
            upstream_first: true,
            routing: Routing::Independent,
            pretrain: TrainConfig {
                epochs: 100,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            auto_policy: AutoPolicy::default(),
            compute_budget_seconds: 60.0,
            score_weights: None,
            max_heads: 8,
            seed: 0,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::validation("at least one feature is required"));
        }
        let mut seen = BTreeSet::new();
        for t in &self.targets {
            validate_target_name(t)?;
            if !seen.insert(t) {
                return Err(Error::validation(format!("duplicate target `{t}`")));
            }
        }
        if self.targets.len() > self.max_heads {
            return Err(Error::validation(format!(
                "{} targets exceed the head limit of {}",
                self.targets.len(),
                self.max_heads
            )));
        }
        if self.novelty_capacity == 0 {
            return Err(Error::validation("novelty_capacity must be at least 1"));
        }
        if self.familiarity_cap == Some(0) {
            return Err(Error::validation("familiarity_cap must be at least 1"));
        }
        Threshold::new(self.initial_threshold, self.adaptation)?;
        if matches!(self.autoencoder_strategy.kind, StrategyKind::Isolation { .. }) {
            return Err(Error::validation(
                "parameter isolation applies to predictor blocks only",
            ));
        }
        self.autoencoder_strategy.validate()?;
        self.predictor_strategy.validate()?;
        self.pretrain.validate()?;
        if !(self.compute_budget_seconds > 0.0) {
            return Err(Error::validation("compute_budget_seconds must be positive"));
        }
        if let Some(w) = &self.score_weights {
            if !w.keys().map(String::as_str).eq(sorted_keys()) {
                return Err(Error::validation(format!(
                    "score_weights must name exactly {}",
                    COMPONENT_KEYS.join(", ")
                )));
            }
        }
        Ok(())
    }
}

fn sorted_keys() -> impl Iterator<Item = &'static str> {
    let mut keys = COMPONENT_KEYS.to_vec();
    keys.sort_unstable();
    keys.into_iter()
}

pub(crate) fn validate_target_name(name: &str) -> Result<()> {
    if name.is_empty() || name == AUTOENCODER_BLOCK {
        return Err(Error::validation(format!("`{name}` is not a valid target name")));
    }
    Ok(())
}
