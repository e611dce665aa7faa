use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::BlockEval;
use crate::nn::MultiHeadRegressor;
use crate::novelty::{
    self, BlockRole, BufferStatus, BufferedSample, FamiliarityBuffer, NoveltyBuffer, Reservoir,
    Threshold,
};
use crate::preprocess::Preprocessor;
use crate::sample::Sample;
use crate::strategies::{StrategySpec, UpdateResult};

/// One scored unit of the model: the autoencoder or a single predictor head.
#[derive(Debug, Clone)]
pub struct ModelBlock {
    pub id: String,
    pub role: BlockRole,
    pub threshold: Threshold,
    pub novelty: NoveltyBuffer<BufferedSample>,
    pub familiarity: FamiliarityBuffer<BufferedSample>,
    pub strategy: StrategySpec,
    reservoir: Reservoir<BufferedSample>,
    retained: Vec<BufferedSample>,
    pub(crate) triggered_at: Option<u64>,
    pub(crate) eval: BlockEval,
    live_sum: f64,
    live_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub id: String,
    pub role: BlockRole,
    pub threshold: Threshold,
    pub novelty: BufferStatus,
    pub novelty_capacity: usize,
    pub familiarity: usize,
    pub familiarity_cap: Option<usize>,
    pub retained: usize,
    pub strategy: StrategySpec,
    pub triggered: bool,
}

impl ModelBlock {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        id: String,
        role: BlockRole,
        threshold: Threshold,
        capacity: usize,
        familiarity_cap: Option<usize>,
        strategy: StrategySpec,
        retained_size: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            id,
            role,
            threshold,
            novelty: NoveltyBuffer::new(capacity)?,
            familiarity: FamiliarityBuffer::new(familiarity_cap),
            strategy,
            reservoir: Reservoir::new(retained_size, seed),
            retained: Vec::new(),
            triggered_at: None,
            eval: BlockEval::default(),
            live_sum: 0.0,
            live_count: 0,
        })
    }

    /// Score of `sample`, or `None` when the block's target is unlabeled.
    pub fn score_opt(&self, model: &MultiHeadRegressor, sample: &Sample) -> Result<Option<f64>> {
        if let Some(t) = self.role.target() {
            if sample.target(t).is_none() {
                return Ok(None);
            }
        }
        novelty::score(model, &self.role, sample).map(Some)
    }

    pub(crate) fn offer_retained(&mut self, item: BufferedSample) {
        self.reservoir.offer(item);
    }

    pub(crate) fn freeze_retained(&mut self) {
        self.retained = self.reservoir.items().to_vec();
    }

    /// Frozen evaluation set that forgetting is measured on.
    pub fn retained(&self) -> &[BufferedSample] {
        &self.retained
    }

    pub(crate) fn retained_samples(&self) -> Vec<Sample> {
        self.retained.iter().map(|b| b.sample.clone()).collect()
    }

    pub(crate) fn record_live_score(&mut self, score: f64) {
        self.live_sum += score;
        self.live_count += 1;
    }

    /// Mean score of stream samples since the last accepted update.
    pub fn live_mean(&self) -> Option<f64> {
        (self.live_count > 0).then(|| self.live_sum / self.live_count as f64)
    }

    pub(crate) fn record_accepted(&mut self, result: &UpdateResult) {
        self.eval.updates_accepted += 1;
        self.eval.fitting_error = Some(result.errors.novel_after);
        self.eval.forgetting_ratio = result.forgetting_ratio;
        self.eval.training_time += result.training_time;
        self.live_sum = 0.0;
        self.live_count = 0;
    }

    pub(crate) fn eval_snapshot(&self) -> BlockEval {
        BlockEval {
            prediction_error: self.live_mean(),
            ..self.eval.clone()
        }
    }

    /// Samples this block currently holds.
    pub fn stored(&self) -> usize {
        let status = self.novelty.status();
        status.fill + status.pending + self.familiarity.len() + self.reservoir.items().len()
    }

    pub(crate) fn rescale(&mut self, pre: &Preprocessor) -> Result<usize> {
        let mut count = 0;
        let all = self
            .novelty
            .items_mut()
            .chain(self.familiarity.items_mut())
            .chain(self.reservoir.items_mut().iter_mut())
            .chain(self.retained.iter_mut());
        for item in all {
            item.sample.x = pre.rescale(&item.raw_x)?;
            count += 1;
        }
        Ok(count)
    }

    pub fn state(&self) -> BlockState {
        BlockState {
            id: self.id.clone(),
            role: self.role.clone(),
            threshold: self.threshold,
            novelty: self.novelty.status(),
            novelty_capacity: self.novelty.capacity(),
            familiarity: self.familiarity.len(),
            familiarity_cap: self.familiarity.retention_cap(),
            retained: self.retained.len(),
            strategy: self.strategy.clone(),
            triggered: self.triggered_at.is_some(),
        }
    }
}
