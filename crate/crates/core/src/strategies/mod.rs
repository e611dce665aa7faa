//! Continual-learning update strategies: naive fine-tuning, rehearsal,
//! EWC-style regularization, and parameter isolation.

mod ewc;
mod rehearsal;

pub use ewc::{compute_fisher, penalized_loss, EwcPenalty, FisherInfo};
pub use rehearsal::{compose_rehearsal_batch, RehearsalBatch};

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::forgetting_ratio;
use crate::nn::{
    train_with, Example, HeadView, MultiHeadRegressor, ReconstructionView, ShuffledBatches,
    TrainConfig, Trainable,
};
use crate::novelty::BlockRole;
use crate::sample::Sample;
use rehearsal::RehearsalBatches;

/// Upper bound on familiar samples used to estimate Fisher information.
pub const FISHER_SAMPLE_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Naive,
    Rehearsal {
        #[serde(default = "default_mix_ratio")]
        mix_ratio: f64,
        #[serde(default = "default_familiar_count")]
        familiar_sample_count: usize,
    },
    Ewc {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Isolation {
        #[serde(default = "default_true")]
        freeze_shared: bool,
    },
}

fn default_mix_ratio() -> f64 {
    0.5
}

fn default_familiar_count() -> usize {
    256
}

fn default_lambda() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

impl StrategyKind {
    pub fn rehearsal() -> Self {
        StrategyKind::Rehearsal {
            mix_ratio: default_mix_ratio(),
            familiar_sample_count: default_familiar_count(),
        }
    }

    pub fn ewc() -> Self {
        StrategyKind::Ewc {
            lambda: default_lambda(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::Rehearsal { .. } => "rehearsal",
            StrategyKind::Ewc { .. } => "ewc",
            StrategyKind::Isolation { .. } => "isolation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(flatten)]
    pub kind: StrategyKind,
    #[serde(default)]
    pub train: TrainConfig,
    /// Fine-tune the shared encoder together with a predictor head
    /// (ignored by isolation, which uses `freeze_shared`).
    #[serde(default = "default_true")]
    pub finetune_shared: bool,
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self::new(StrategyKind::Naive)
    }
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            train: TrainConfig::default(),
            finetune_shared: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            StrategyKind::Rehearsal { mix_ratio, .. } if !(0.0..=1.0).contains(&mix_ratio) => {
                return Err(Error::validation(format!(
                    "mix_ratio must lie in [0, 1], got {mix_ratio}"
                )))
            }
            StrategyKind::Ewc { lambda } if !(lambda >= 0.0) || !lambda.is_finite() => {
                return Err(Error::validation(format!("lambda must be >= 0, got {lambda}")))
            }
            _ => {}
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateStatus {
    Proposed,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateErrors {
    pub novel_before: f64,
    pub novel_after: f64,
    pub retained_before: f64,
    pub retained_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateResult {
    pub update_id: u64,
    pub block: String,
    pub errors: UpdateErrors,
    /// `None` when undefined (retained error rose from exactly zero).
    pub forgetting_ratio: Option<f64>,
    /// Wall-clock seconds.
    pub training_time: f64,
    pub strategy: StrategySpec,
    pub status: UpdateStatus,
    pub novel_count: usize,
    pub retained_count: usize,
    pub familiar_used: usize,
    pub fell_back_to_novel: bool,
}

impl UpdateResult {
    pub fn transition(&mut self, to: UpdateStatus) -> Result<()> {
        if self.status != UpdateStatus::Proposed || to == UpdateStatus::Proposed {
            return Err(Error::Conflict(format!(
                "update {} is already {:?}",
                self.update_id, self.status
            )));
        }
        self.status = to;
        Ok(())
    }
}

/// Result of a block update: the proposal plus per-sample novel scores
/// under the updated weights (for threshold adaptation).
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub result: UpdateResult,
    pub novel_scores_after: Vec<f64>,
}

fn examples_for(role: &BlockRole, samples: &[Sample]) -> Vec<Example> {
    samples
        .iter()
        .filter_map(|s| match role {
            BlockRole::Autoencoder => Some(Example::new(s.x.clone(), s.x.clone())),
            BlockRole::Predictor { target } => s
                .target(target)
                .map(|y| Example::new(s.x.clone(), vec![y])),
        })
        .collect()
}

fn uniform_subset(items: &[Example], limit: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
    if items.len() <= limit {
        return items.to_vec();
    }
    let mut picked = sample_indices(rng, items.len(), limit).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

fn mean_loss(view: &dyn Trainable, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        Ok(0.0)
    } else {
        view.loss(data)
    }
}

/// Updates one block of `model` in place and measures the effect.
///
/// `retained` is the frozen evaluation set for forgetting. `seed` drives
/// every random choice (sampling and batch order).
#[allow(clippy::too_many_arguments)]
pub fn update_block(
    model: &mut MultiHeadRegressor,
    role: &BlockRole,
    block_id: &str,
    strategy: &StrategySpec,
    novel: &[Sample],
    familiar: &[Sample],
    retained: &[Sample],
    seed: u64,
) -> Result<UpdateOutcome> {
    strategy.validate()?;
    let novel_ex = examples_for(role, novel);
    if novel_ex.is_empty() {
        return Err(Error::argument("update needs at least one novel sample"));
    }
    let familiar_ex = examples_for(role, familiar);
    let retained_ex = examples_for(role, retained);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_config = TrainConfig {
        seed,
        ..strategy.train.clone()
    };

    let mut view: Box<dyn Trainable + '_> = match (role, &strategy.kind) {
        (BlockRole::Autoencoder, StrategyKind::Isolation { .. }) => {
            return Err(Error::Strategy(
                "parameter isolation applies to predictor blocks only".into(),
            ))
        }
        (BlockRole::Autoencoder, _) => Box::new(ReconstructionView {
            ae: &mut model.shared,
        }),
        (BlockRole::Predictor { target }, StrategyKind::Isolation { freeze_shared }) => {
            Box::new(HeadView::new(model, target, !freeze_shared)?)
        }
        (BlockRole::Predictor { target }, _) => {
            Box::new(HeadView::new(model, target, strategy.finetune_shared)?)
        }
    };

    let novel_before = view.loss(&novel_ex)?;
    let retained_before = mean_loss(view.as_ref(), &retained_ex)?;

    let mut familiar_used = 0;
    let mut fell_back = false;
    let report = match &strategy.kind {
        StrategyKind::Naive | StrategyKind::Isolation { .. } => {
            let mut source = ShuffledBatches::new(&novel_ex, train_config.batch_size);
            train_with(view.as_mut(), &mut source, &novel_ex, &train_config, None)?
        }
        StrategyKind::Rehearsal {
            mix_ratio,
            familiar_sample_count,
        } => {
            let pool = uniform_subset(&familiar_ex, *familiar_sample_count, &mut rng);
            familiar_used = pool.len();
            fell_back = pool.is_empty();
            let mut source = RehearsalBatches {
                novel: &novel_ex,
                familiar: &pool,
                mix_ratio: *mix_ratio,
                batch_size: train_config.batch_size,
            };
            train_with(view.as_mut(), &mut source, &novel_ex, &train_config, None)?
        }
        StrategyKind::Ewc { lambda } => {
            if familiar_ex.is_empty() {
                return Err(Error::Strategy(
                    "EWC needs familiar samples to estimate Fisher information".into(),
                ));
            }
            let fisher_batch = uniform_subset(&familiar_ex, FISHER_SAMPLE_LIMIT, &mut rng);
            familiar_used = fisher_batch.len();
            let fisher = compute_fisher(view.as_ref(), &fisher_batch)?;
            let penalty = EwcPenalty {
                fisher: &fisher,
                lambda: *lambda,
            };
            let mut source = ShuffledBatches::new(&novel_ex, train_config.batch_size);
            train_with(view.as_mut(), &mut source, &novel_ex, &train_config, Some(&penalty))?
        }
    };

    let novel_scores_after: Vec<f64> = novel_ex
        .iter()
        .map(|e| view.loss(std::slice::from_ref(e)))
        .collect::<Result<_>>()?;
    let novel_after = novel_scores_after.iter().sum::<f64>() / novel_scores_after.len() as f64;
    let retained_after = mean_loss(view.as_ref(), &retained_ex)?;
    drop(view);

    Ok(UpdateOutcome {
        result: UpdateResult {
            update_id: 0,
            block: block_id.to_string(),
            errors: UpdateErrors {
                novel_before,
                novel_after,
                retained_before,
                retained_after,
            },
            forgetting_ratio: forgetting_ratio(retained_before, retained_after)?,
            training_time: report.elapsed_time,
            strategy: strategy.clone(),
            status: UpdateStatus::Proposed,
            novel_count: novel_ex.len(),
            retained_count: retained_ex.len(),
            familiar_used,
            fell_back_to_novel: fell_back,
        },
        novel_scores_after,
    })
}
