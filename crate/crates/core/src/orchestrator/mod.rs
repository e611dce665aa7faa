//! The continual-learning instance: routes samples through blocks, runs
//! updates when novelty buffers fill, and applies decisions.
//!
//! Live weights are never touched while an update is in flight. The update
//! trains a candidate copy; accepting installs it, rejecting discards it.

mod block;
mod config;
mod decision;
mod events;
mod versions;

pub use block::{BlockState, ModelBlock};
pub use config::{InstanceConfig, Routing, AUTOENCODER_BLOCK};
pub use decision::{
    AutoPolicy, Decision, DecisionSource, HyperparameterChange, HyperparameterEdit, Verdict,
};
pub use events::{parse_run_log, strip_wall_clock, Destination, Event, EventLog, LogRecord};
pub use versions::{VersionEntry, VersionReason, VersionStore};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cl_score, components, equal_weights, EvalReport};
use crate::nn::{
    train, Example, HeadInit, HeadSpec, HeadView, MultiHeadRegressor, ReconstructionView, Snapshot,
};
use crate::novelty::{self, BlockRole, BufferedSample, Classification, Threshold};
use crate::preprocess::Preprocessor;
use crate::sample::{RawSample, Sample};
use crate::strategies::{
    update_block, StrategyKind, StrategySpec, UpdateErrors, UpdateOutcome, UpdateResult,
    UpdateStatus,
};
use config::validate_target_name;

/// SplitMix64 finalizer over `base ^ salt`, for independent derived seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Mode {
    Running,
    Updating { update_id: u64, block: String },
    AwaitingDecision { update_id: u64, block: String },
}

#[derive(Debug, Clone)]
struct PendingUpdate {
    update_id: u64,
    block: String,
    candidate: MultiHeadRegressor,
    novel_scores_after: Vec<f64>,
    trained: Vec<BufferedSample>,
}

/// Work for one block update, detached from the instance so it can run on
/// another thread while the instance keeps ingesting.
#[derive(Debug, Clone)]
pub struct UpdateJob {
    pub update_id: u64,
    pub block: String,
    role: BlockRole,
    strategy: StrategySpec,
    candidate: MultiHeadRegressor,
    novel: Vec<BufferedSample>,
    familiar: Vec<Sample>,
    retained: Vec<Sample>,
    seed: u64,
}

#[derive(Debug)]
pub struct CompletedUpdate {
    job: UpdateJob,
    outcome: Result<UpdateOutcome>,
}

impl UpdateJob {
    pub fn execute(mut self) -> CompletedUpdate {
        let novel: Vec<Sample> = self.novel.iter().map(|b| b.sample.clone()).collect();
        let outcome = update_block(
            &mut self.candidate,
            &self.role,
            &self.block,
            &self.strategy,
            &novel,
            &self.familiar,
            &self.retained,
            self.seed,
        );
        CompletedUpdate { job: self, outcome }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub verdict: Verdict,
    pub update: Option<UpdateResult>,
    /// Version created by the decision, if any.
    pub version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceState {
    pub mode: Mode,
    pub position: u64,
    pub version: u64,
    pub scaler_version: u64,
    pub features: Vec<String>,
    pub targets: Vec<String>,
    pub blocks: Vec<BlockState>,
    pub pending_update: Option<UpdateResult>,
    pub versions: Vec<VersionSummary>,
    pub last_event: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionSummary {
    pub version: u64,
    pub parent: Option<u64>,
    pub reason: VersionReason,
    pub position: u64,
}

#[derive(Debug, Clone)]
pub struct ClearInstance {
    config: InstanceConfig,
    preprocessor: Preprocessor,
    model: MultiHeadRegressor,
    blocks: Vec<ModelBlock>,
    versions: VersionStore,
    log: EventLog,
    mode: Mode,
    pending: Option<PendingUpdate>,
    updates: BTreeMap<u64, UpdateResult>,
    position: u64,
    trigger_counter: u64,
    base_param_count: usize,
    ingesting: bool,
}

impl ClearInstance {
    /// Fits the scaler, pretrains every block, and calibrates thresholds on
    /// the warm-up samples. Warm-up samples do not count as stream positions.
    pub fn bootstrap(config: InstanceConfig, warmup: &[RawSample]) -> Result<Self> {
        config.validate()?;
        if warmup.is_empty() {
            return Err(Error::validation("bootstrap needs at least one warm-up sample"));
        }
        let rows: Vec<Vec<Option<f64>>> = warmup.iter().map(|r| r.x.clone()).collect();
        let mut preprocessor = Preprocessor::fit(&config.features, &rows, config.preprocess.clone())?;
        let mut processed = Vec::with_capacity(warmup.len());
        for raw in warmup {
            if let Some(p) = preprocessor.process(raw)? {
                processed.push(p);
            }
        }
        if processed.is_empty() {
            return Err(Error::validation("every warm-up sample was dropped"));
        }
        let mut model = MultiHeadRegressor::with_targets(
            config.features.len(),
            &config.targets,
            &config.architecture,
            config.seed,
        )?;
        let pretrain = config.pretrain.clone();
        let recon: Vec<Example> = processed
            .iter()
            .map(|p| Example::new(p.sample.x.clone(), p.sample.x.clone()))
            .collect();
        train(
            &mut ReconstructionView { ae: &mut model.shared },
            &recon,
            &pretrain,
        )?;
        for target in &config.targets {
            let data: Vec<Example> = processed
                .iter()
                .filter_map(|p| p.sample.target(target).map(|y| Example::new(p.sample.x.clone(), vec![y])))
                .collect();
            if !data.is_empty() {
                train(&mut HeadView::new(&mut model, target, false)?, &data, &pretrain)?;
            }
        }

        let mut blocks = Vec::with_capacity(config.targets.len() + 1);
        let roles = std::iter::once((AUTOENCODER_BLOCK.to_string(), BlockRole::Autoencoder)).chain(
            config
                .targets
                .iter()
                .map(|t| (t.clone(), BlockRole::Predictor { target: t.clone() })),
        );
        for (i, (id, role)) in roles.enumerate() {
            let strategy = match role {
                BlockRole::Autoencoder => config.autoencoder_strategy.clone(),
                BlockRole::Predictor { .. } => config.predictor_strategy.clone(),
            };
            let mut block = ModelBlock::new(
                id,
                role,
                Threshold::new(config.initial_threshold, config.adaptation)?,
                config.novelty_capacity,
                config.familiarity_cap,
                strategy,
                config.retained_size,
                derive_seed(config.seed, 0x5EED_0000 + i as u64),
            )?;
            let mut scores = Vec::new();
            for p in &processed {
                if let Some(s) = block.score_opt(&model, &p.sample)? {
                    scores.push(s);
                    block.offer_retained(BufferedSample {
                        seq: 0,
                        sample: p.sample.clone(),
                        raw_x: p.raw_x.clone(),
                        score: s,
                    });
                }
            }
            if let Some(t) = block.threshold.adjusted(&scores) {
                block.threshold = t;
            }
            block.freeze_retained();
            blocks.push(block);
        }

        let base_param_count = model.param_count();
        let mut instance = Self {
            config,
            preprocessor,
            model,
            blocks,
            versions: VersionStore::new(),
            log: EventLog::new(),
            mode: Mode::Running,
            pending: None,
            updates: BTreeMap::new(),
            position: 0,
            trigger_counter: 0,
            base_param_count,
            ingesting: false,
        };
        let version = instance.push_version(VersionReason::Initial);
        let thresholds = events::threshold_values(instance.blocks.iter().map(|b| (&b.id, &b.threshold)));
        instance.emit(Event::Bootstrapped {
            samples: processed.len(),
            version,
            thresholds,
        })?;
        instance.emit(Event::VersionCreated {
            version,
            reason: VersionReason::Initial.describe(),
        })?;
        Ok(instance)
    }

    pub fn config(&self) -> &InstanceConfig {
        &self.config
    }

    pub fn model(&self) -> &MultiHeadRegressor {
        &self.model
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.preprocessor
    }

    pub fn blocks(&self) -> &[ModelBlock] {
        &self.blocks
    }

    pub fn block(&self, id: &str) -> Result<&ModelBlock> {
        self.blocks
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| Error::NotFound(format!("block `{id}`")))
    }

    fn block_index(&self, id: &str) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| Error::NotFound(format!("block `{id}`")))
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn versions(&self) -> &VersionStore {
        &self.versions
    }

    pub fn current_version(&self) -> u64 {
        self.versions.current().map_or(0, |v| v.version)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Streams every existing and future log record to `sink` as JSON lines.
    pub fn set_log_sink(&mut self, sink: Box<dyn Write + Send>) -> Result<()> {
        self.log.set_sink(sink)
    }

    pub fn flush_log(&mut self) -> Result<()> {
        self.log.flush()
    }

    pub fn updates(&self) -> impl Iterator<Item = &UpdateResult> {
        self.updates.values()
    }

    pub fn update(&self, update_id: u64) -> Result<&UpdateResult> {
        self.updates
            .get(&update_id)
            .ok_or_else(|| Error::NotFound(format!("update {update_id}")))
    }

    pub fn pending_update(&self) -> Option<&UpdateResult> {
        self.pending.as_ref().and_then(|p| self.updates.get(&p.update_id))
    }

    pub fn targets(&self) -> Vec<String> {
        self.model.heads().keys().cloned().collect()
    }

    pub fn state(&self) -> InstanceState {
        InstanceState {
            mode: self.mode.clone(),
            position: self.position,
            version: self.current_version(),
            scaler_version: self.preprocessor.version(),
            features: self.config.features.clone(),
            targets: self.targets(),
            blocks: self.blocks.iter().map(ModelBlock::state).collect(),
            pending_update: self.pending_update().cloned(),
            versions: self
                .versions
                .entries()
                .iter()
                .map(|e| VersionSummary {
                    version: e.version,
                    parent: e.parent,
                    reason: e.reason.clone(),
                    position: e.position,
                })
                .collect(),
            last_event: self.log.last_seq(),
        }
    }

    fn emit(&mut self, event: Event) -> Result<()> {
        let position = if self.ingesting {
            self.position
        } else {
            self.position + 1
        };
        self.log.append(position, event).map(|_| ())
    }

    /// Logs a checkpoint carrying the current evaluation report.
    pub fn checkpoint(&mut self, label: &str) -> Result<EvalReport> {
        let report = self.eval_report()?;
        self.emit(Event::Checkpoint {
            label: label.to_string(),
            report: report.clone(),
        })?;
        Ok(report)
    }

    fn push_version(&mut self, reason: VersionReason) -> u64 {
        let thresholds = self
            .blocks
            .iter()
            .map(|b| (b.id.clone(), b.threshold))
            .collect();
        self.versions.push(VersionEntry {
            version: 0,
            parent: None,
            reason,
            position: self.position,
            snapshot: self.model.snapshot(),
            scaler: self.preprocessor.scaler().clone(),
            scaler_version: self.preprocessor.version(),
            thresholds,
        })
    }

    fn record_version(&mut self, reason: VersionReason) -> Result<u64> {
        let description = reason.describe();
        let version = self.push_version(reason);
        self.emit(Event::VersionCreated {
            version,
            reason: description,
        })?;
        Ok(version)
    }

    fn in_flight_block(&self) -> Option<&str> {
        match &self.mode {
            Mode::Running => None,
            Mode::Updating { block, .. } | Mode::AwaitingDecision { block, .. } => Some(block),
        }
    }

    fn check_trigger(&mut self, idx: usize) -> Result<()> {
        if self.in_flight_block() == Some(self.blocks[idx].id.as_str()) {
            return Ok(());
        }
        let block = &mut self.blocks[idx];
        if !block.novelty.is_full() {
            block.triggered_at = None;
        } else if block.triggered_at.is_none() {
            self.trigger_counter += 1;
            block.triggered_at = Some(self.trigger_counter);
            let event = Event::UpdateTriggered {
                block: block.id.clone(),
                fill: block.novelty.len(),
                capacity: block.novelty.capacity(),
            };
            self.emit(event)?;
        }
        Ok(())
    }

    /// Preprocesses, predicts, scores, and buffers one sample. Returns the
    /// log records it produced.
    pub fn ingest(&mut self, raw: &RawSample) -> Result<Vec<LogRecord>> {
        if raw.x.len() != self.config.features.len() {
            return Err(Error::Ingest(format!(
                "sample has {} features, expected {}",
                raw.x.len(),
                self.config.features.len()
            )));
        }
        let first = self.log.last_seq();
        self.position += 1;
        self.ingesting = true;
        let outcome = self.ingest_inner(raw);
        self.ingesting = false;
        outcome?;
        Ok(self.log.since(first).to_vec())
    }

    fn ingest_inner(&mut self, raw: &RawSample) -> Result<()> {
        let seq = self.position;
        let Some(processed) = self.preprocessor.process(raw)? else {
            self.emit(Event::SampleDropped {
                seq,
                reason: "missing feature under drop_row".into(),
            })?;
            return Ok(());
        };
        for (target, value) in self.model.predict_all(&processed.sample.x)? {
            self.emit(Event::Prediction { seq, target, value })?;
        }
        let mut ae_novel = false;
        for idx in 0..self.blocks.len() {
            let Some(score) = self.blocks[idx].score_opt(&self.model, &processed.sample)? else {
                continue;
            };
            let block = &mut self.blocks[idx];
            let classification = block.threshold.classify(score)?;
            let item = BufferedSample {
                seq,
                sample: processed.sample.clone(),
                raw_x: processed.raw_x.clone(),
                score,
            };
            let gated = self.config.routing == Routing::AutoencoderGated
                && ae_novel
                && block.role != BlockRole::Autoencoder;
            let mut evicted = Vec::new();
            let destination = match classification {
                _ if gated => Destination::Gated,
                Classification::Novel => {
                    let was_full = block.novelty.is_full();
                    block.novelty.push(item);
                    if was_full {
                        Destination::Pending
                    } else {
                        Destination::Novelty
                    }
                }
                Classification::Familiar => {
                    block.offer_retained(item.clone());
                    evicted = block.familiarity.push(item).1;
                    Destination::Familiarity
                }
            };
            block.record_live_score(score);
            if block.role == BlockRole::Autoencoder {
                ae_novel = classification == Classification::Novel;
            }
            let event = Event::Score {
                seq,
                block: block.id.clone(),
                score,
                threshold: block.threshold.value,
                classification,
                destination,
            };
            let block_id = block.id.clone();
            self.emit(event)?;
            if !evicted.is_empty() {
                self.emit(Event::FamiliarEvicted {
                    block: block_id,
                    seqs: evicted.iter().map(|b| b.seq).collect(),
                })?;
            }
            self.check_trigger(idx)?;
        }
        Ok(())
    }

    /// The block whose queued trigger should run next, if any.
    pub fn next_triggered(&self) -> Option<&str> {
        if self.mode != Mode::Running {
            return None;
        }
        let queued = self.blocks.iter().filter(|b| b.triggered_at.is_some());
        let pick = if self.config.upstream_first {
            queued.min_by_key(|b| (b.role != BlockRole::Autoencoder, b.triggered_at))
        } else {
            queued.min_by_key(|b| b.triggered_at)
        };
        pick.map(|b| b.id.as_str())
    }

    /// Snapshots the inputs of an update for `block_id` and marks it in flight.
    pub fn begin_update(&mut self, block_id: &str) -> Result<UpdateJob> {
        if self.mode != Mode::Running {
            return Err(Error::Conflict("another update is in flight".into()));
        }
        let idx = self.block_index(block_id)?;
        let block = &self.blocks[idx];
        if !block.novelty.is_full() {
            return Err(Error::Conflict(format!(
                "novelty buffer of `{block_id}` is not full ({}/{})",
                block.novelty.len(),
                block.novelty.capacity()
            )));
        }
        let update_id = self.updates.keys().next_back().map_or(1, |k| k + 1);
        let job = UpdateJob {
            update_id,
            block: block.id.clone(),
            role: block.role.clone(),
            strategy: block.strategy.clone(),
            candidate: self.model.clone(),
            novel: block.novelty.items().to_vec(),
            familiar: block.familiarity.items().map(|b| b.sample.clone()).collect(),
            retained: block.retained_samples(),
            seed: derive_seed(self.config.seed, update_id),
        };
        self.blocks[idx].triggered_at = None;
        self.mode = Mode::Updating {
            update_id,
            block: block_id.to_string(),
        };
        let base_version = self.current_version();
        self.emit(Event::UpdateStarted {
            update_id,
            block: block_id.to_string(),
            base_version,
        })?;
        Ok(job)
    }

    /// Records the outcome of [`UpdateJob::execute`]. Failed training is
    /// rejected on the spot; the auto policy decides when enabled.
    pub fn finish_update(&mut self, done: CompletedUpdate) -> Result<UpdateResult> {
        let CompletedUpdate { job, outcome } = done;
        match &self.mode {
            Mode::Updating { update_id, .. } if *update_id == job.update_id => {}
            _ => {
                return Err(Error::Conflict(format!(
                    "update {} is not in flight",
                    job.update_id
                )))
            }
        }
        let idx = self.block_index(&job.block)?;
        let trained_seqs: Vec<u64> = job.novel.iter().map(|b| b.seq).collect();
        match outcome {
            Ok(outcome) => {
                let mut result = outcome.result;
                result.update_id = job.update_id;
                self.blocks[idx].eval.updates_proposed += 1;
                self.updates.insert(job.update_id, result.clone());
                self.emit(Event::UpdateProposed {
                    result: result.clone(),
                    trained_samples: trained_seqs,
                })?;
                if result.fell_back_to_novel {
                    self.emit(Event::Warning {
                        message: format!(
                            "update {}: no familiar samples, rehearsal trained on novel samples only",
                            job.update_id
                        ),
                    })?;
                }
                self.pending = Some(PendingUpdate {
                    update_id: job.update_id,
                    block: job.block.clone(),
                    candidate: job.candidate,
                    novel_scores_after: outcome.novel_scores_after,
                    trained: job.novel,
                });
                self.mode = Mode::AwaitingDecision {
                    update_id: job.update_id,
                    block: job.block,
                };
                if self.config.auto_policy.enabled {
                    let decision = Decision {
                        update_id: Some(result.update_id),
                        verdict: self.config.auto_policy.decide(&result),
                        issued_by: DecisionSource::AutoPolicy,
                        note: None,
                        edits: Vec::new(),
                    };
                    self.apply_decision(decision)?;
                }
                Ok(self.updates[&result.update_id].clone())
            }
            Err(err) => {
                let before = job.novel.iter().map(|b| b.score).sum::<f64>() / job.novel.len().max(1) as f64;
                let result = UpdateResult {
                    update_id: job.update_id,
                    block: job.block.clone(),
                    errors: UpdateErrors {
                        novel_before: before,
                        novel_after: before,
                        retained_before: 0.0,
                        retained_after: 0.0,
                    },
                    forgetting_ratio: None,
                    training_time: 0.0,
                    strategy: job.strategy,
                    status: UpdateStatus::Rejected,
                    novel_count: job.novel.len(),
                    retained_count: job.retained.len(),
                    familiar_used: 0,
                    fell_back_to_novel: false,
                };
                self.blocks[idx].eval.updates_proposed += 1;
                self.blocks[idx].eval.updates_rejected += 1;
                self.updates.insert(job.update_id, result.clone());
                self.emit(Event::UpdateFailed {
                    update_id: job.update_id,
                    block: job.block.clone(),
                    error: err.to_string(),
                })?;
                self.mode = Mode::Running;
                self.demote_novel(idx)?;
                self.check_trigger(idx)?;
                Ok(result)
            }
        }
    }

    /// Runs a full update synchronously.
    pub fn run_update(&mut self, block_id: &str) -> Result<UpdateResult> {
        let job = self.begin_update(block_id)?;
        let done = job.execute();
        self.finish_update(done)
    }

    /// Runs queued updates until none remain or one awaits an operator.
    pub fn process_triggers(&mut self) -> Result<Vec<UpdateResult>> {
        let mut results = Vec::new();
        while let Some(id) = self.next_triggered().map(str::to_string) {
            results.push(self.run_update(&id)?);
        }
        Ok(results)
    }

    fn validate_edits(&self, edits: &[HyperparameterEdit], in_flight: Option<&str>) -> Result<()> {
        for edit in edits {
            self.block_index(&edit.block)?;
            edit.change.validate()?;
            if let HyperparameterChange::Strategy(s) = &edit.change {
                if edit.block == AUTOENCODER_BLOCK && matches!(s.kind, StrategyKind::Isolation { .. }) {
                    return Err(Error::validation(
                        "parameter isolation applies to predictor blocks only",
                    ));
                }
            }
            if matches!(edit.change, HyperparameterChange::NoveltyCapacity(_))
                && in_flight == Some(edit.block.as_str())
            {
                return Err(Error::Conflict(format!(
                    "cannot resize the novelty buffer of `{}` while its update is in flight",
                    edit.block
                )));
            }
        }
        Ok(())
    }

    /// Validates every edit, then applies them in order.
    pub fn set_hyperparameters(&mut self, edits: &[HyperparameterEdit]) -> Result<()> {
        let in_flight = self.in_flight_block().map(str::to_string);
        self.validate_edits(edits, in_flight.as_deref())?;
        self.apply_edits(edits)
    }

    fn apply_edits(&mut self, edits: &[HyperparameterEdit]) -> Result<()> {
        for edit in edits {
            let idx = self.block_index(&edit.block)?;
            let block = &mut self.blocks[idx];
            let mut evicted = Vec::new();
            let (old, new) = match &edit.change {
                HyperparameterChange::Threshold(v) => {
                    let old = block.threshold.value;
                    block.threshold.value = *v;
                    (to_value(&old)?, to_value(v)?)
                }
                HyperparameterChange::Adaptation(a) => {
                    let old = block.threshold.adaptation;
                    block.threshold.adaptation = *a;
                    (to_value(&old)?, to_value(a)?)
                }
                HyperparameterChange::NoveltyCapacity(c) => {
                    let old = block.novelty.capacity();
                    block.novelty.set_capacity(*c)?;
                    (to_value(&old)?, to_value(c)?)
                }
                HyperparameterChange::FamiliarityCap(c) => {
                    let old = block.familiarity.retention_cap();
                    evicted = block.familiarity.set_retention_cap(*c);
                    (to_value(&old)?, to_value(c)?)
                }
                HyperparameterChange::Strategy(s) => {
                    let old = std::mem::replace(&mut block.strategy, s.clone());
                    (to_value(&old)?, to_value(s)?)
                }
            };
            self.emit(Event::Hyperparameter {
                block: edit.block.clone(),
                field: edit.change.field().to_string(),
                old,
                new,
            })?;
            if !evicted.is_empty() {
                self.emit(Event::FamiliarEvicted {
                    block: edit.block.clone(),
                    seqs: evicted.iter().map(|b| b.seq).collect(),
                })?;
            }
            self.check_trigger(idx)?;
        }
        Ok(())
    }

    /// Applies an accept, reject, or rollback, followed by any edits.
    pub fn apply_decision(&mut self, decision: Decision) -> Result<DecisionOutcome> {
        let in_flight_after = match decision.verdict {
            Verdict::Accept | Verdict::Reject => None,
            Verdict::RollbackTo { .. } => self.in_flight_block().map(str::to_string),
        };
        self.validate_edits(&decision.edits, in_flight_after.as_deref())?;
        match decision.verdict {
            Verdict::Accept | Verdict::Reject => {
                let id = decision
                    .update_id
                    .ok_or_else(|| Error::validation("accept and reject need an update_id"))?;
                let update = self.update(id)?;
                if update.status != UpdateStatus::Proposed {
                    return Err(Error::Conflict(format!(
                        "update {id} was already {:?}",
                        update.status
                    )));
                }
                if !matches!(&self.mode, Mode::AwaitingDecision { update_id, .. } if *update_id == id) {
                    return Err(Error::Conflict(format!("update {id} is not awaiting a decision")));
                }
            }
            Verdict::RollbackTo { version } => {
                if self.mode != Mode::Running {
                    return Err(Error::Conflict(
                        "cannot roll back while an update is in flight".into(),
                    ));
                }
                let entry = self.versions.get(version)?;
                let mut probe = self.model.clone();
                probe.restore(&entry.snapshot).map_err(|e| {
                    Error::Conflict(format!("version {version} is incompatible: {e}"))
                })?;
            }
        }
        self.emit(Event::DecisionApplied {
            update_id: decision.update_id,
            verdict: decision.verdict,
            issued_by: decision.issued_by,
            note: decision.note.clone(),
        })?;
        let outcome = match decision.verdict {
            Verdict::Accept => self.accept()?,
            Verdict::Reject => self.reject()?,
            Verdict::RollbackTo { version } => self.rollback(version)?,
        };
        self.apply_edits(&decision.edits)?;
        Ok(outcome)
    }

    fn accept(&mut self) -> Result<DecisionOutcome> {
        let pending = self.pending.take().expect("mode guarantees a pending update");
        let mut result = self.updates[&pending.update_id].clone();
        result.transition(UpdateStatus::Accepted)?;
        self.updates.insert(pending.update_id, result.clone());
        self.model = pending.candidate;
        self.mode = Mode::Running;

        let idx = self.block_index(&pending.block)?;
        let block = &mut self.blocks[idx];
        let novelty = block.novelty.drain();
        let familiarity = block.familiarity.drain();
        block.freeze_retained();
        block.record_accepted(&result);
        let old = block.threshold.value;
        let adjusted = block.threshold.adjusted(&pending.novel_scores_after);
        if let Some(t) = adjusted {
            block.threshold = t;
        }
        let block_id = block.id.clone();
        self.emit(Event::BuffersEmptied {
            block: block_id.clone(),
            novelty: novelty.iter().map(|b| b.seq).collect(),
            familiarity: familiarity.iter().map(|b| b.seq).collect(),
        })?;
        match adjusted {
            Some(t) => self.emit(Event::ThresholdAdjusted {
                block: block_id,
                old,
                new: t.value,
            })?,
            None => self.emit(Event::ThresholdAdjustmentSkipped {
                block: block_id,
                reason: "fixed threshold".into(),
            })?,
        }

        if self.preprocessor.config().update_scaler_on_accept {
            let rows: Vec<Vec<f64>> = pending.trained.iter().map(|b| b.raw_x.clone()).collect();
            if self.preprocessor.update_scaler(&rows)? {
                let scaler_version = self.preprocessor.version();
                self.emit(Event::ScalerUpdated { scaler_version })?;
                self.rescale_buffers(scaler_version)?;
            }
        }
        let version = self.record_version(VersionReason::Accepted {
            update_id: result.update_id,
        })?;
        self.check_trigger(idx)?;
        Ok(DecisionOutcome {
            verdict: Verdict::Accept,
            update: Some(result),
            version: Some(version),
        })
    }

    fn reject(&mut self) -> Result<DecisionOutcome> {
        let pending = self.pending.take().expect("mode guarantees a pending update");
        let mut result = self.updates[&pending.update_id].clone();
        result.transition(UpdateStatus::Rejected)?;
        self.updates.insert(pending.update_id, result.clone());
        self.mode = Mode::Running;
        let idx = self.block_index(&pending.block)?;
        self.blocks[idx].eval.updates_rejected += 1;
        self.demote_novel(idx)?;
        self.check_trigger(idx)?;
        Ok(DecisionOutcome {
            verdict: Verdict::Reject,
            update: Some(result),
            version: None,
        })
    }

    /// Moves the novelty buffer's contents into the familiarity buffer.
    fn demote_novel(&mut self, idx: usize) -> Result<()> {
        let block = &mut self.blocks[idx];
        let demoted = block.novelty.drain();
        let seqs: Vec<u64> = demoted.iter().map(|b| b.seq).collect();
        let mut evicted = Vec::new();
        for item in demoted {
            evicted.extend(block.familiarity.push(item).1);
        }
        let block_id = block.id.clone();
        self.emit(Event::SamplesDemoted {
            block: block_id.clone(),
            seqs,
        })?;
        if !evicted.is_empty() {
            self.emit(Event::FamiliarEvicted {
                block: block_id,
                seqs: evicted.iter().map(|b| b.seq).collect(),
            })?;
        }
        Ok(())
    }

    fn rollback(&mut self, version: u64) -> Result<DecisionOutcome> {
        let entry = self.versions.get(version)?.clone();
        self.model.restore(&entry.snapshot)?;
        let scaler_changed = *self.preprocessor.scaler() != entry.scaler;
        self.preprocessor
            .restore_scaler(entry.scaler.clone(), entry.scaler_version)?;
        for block in &mut self.blocks {
            if let Some(t) = entry.thresholds.get(&block.id) {
                block.threshold = *t;
            }
        }
        if scaler_changed {
            self.rescale_buffers(entry.scaler_version)?;
        }
        let new_version = self.record_version(VersionReason::RolledBack { to: version })?;
        self.emit(Event::RolledBack {
            to_version: version,
            new_version,
        })?;
        Ok(DecisionOutcome {
            verdict: Verdict::RollbackTo { version },
            update: None,
            version: Some(new_version),
        })
    }

    fn rescale_buffers(&mut self, scaler_version: u64) -> Result<()> {
        let mut count = 0;
        for block in &mut self.blocks {
            count += block.rescale(&self.preprocessor)?;
        }
        if let Some(p) = self.pending.as_mut() {
            for item in &mut p.trained {
                item.sample.x = self.preprocessor.rescale(&item.raw_x)?;
            }
        }
        self.emit(Event::BuffersRescaled {
            scaler_version,
            samples: count,
        })
    }

    /// Adds a predictor head and block for a new target. Existing heads are
    /// untouched unless `strategy` fine-tunes the shared encoder.
    ///
    /// Without warm-up data the head starts with a zero output layer and the
    /// configured initial threshold.
    pub fn add_target(
        &mut self,
        target: &str,
        head: Option<HeadSpec>,
        strategy: Option<StrategySpec>,
        warmup: &[RawSample],
    ) -> Result<u64> {
        if self.mode != Mode::Running {
            return Err(Error::Conflict("cannot add a target while an update is in flight".into()));
        }
        validate_target_name(target)?;
        if self.model.heads().contains_key(target) {
            return Err(Error::Conflict(format!("target `{target}` already exists")));
        }
        if self.model.heads().len() >= self.config.max_heads {
            return Err(Error::validation(format!(
                "head limit of {} reached",
                self.config.max_heads
            )));
        }
        let head = head.unwrap_or_else(|| HeadSpec::from_architecture(&self.config.architecture));
        let strategy = strategy.unwrap_or_else(|| StrategySpec {
            kind: StrategyKind::Isolation { freeze_shared: true },
            ..self.config.predictor_strategy.clone()
        });
        strategy.validate()?;
        let mut scratch = self.preprocessor.clone();
        let mut samples = Vec::new();
        for raw in warmup {
            if let Some(p) = scratch.process(raw)? {
                if p.sample.target(target).is_some() {
                    samples.push(p);
                }
            }
        }
        let salt = 0x7A26_0000 + self.blocks.len() as u64;
        let head_seed = derive_seed(self.config.seed, salt);
        let init = if samples.is_empty() {
            HeadInit::ZeroOutputLayer { seed: head_seed }
        } else {
            HeadInit::SeededRandom { seed: head_seed }
        };
        let mut candidate = self.model.clone();
        candidate.add_head(target, &head, init)?;
        let role = BlockRole::Predictor {
            target: target.to_string(),
        };
        let mut block = ModelBlock::new(
            target.to_string(),
            role.clone(),
            Threshold::new(self.config.initial_threshold, self.config.adaptation)?,
            self.config.novelty_capacity,
            self.config.familiarity_cap,
            strategy.clone(),
            self.config.retained_size,
            derive_seed(self.config.seed, salt + 1),
        )?;
        if !samples.is_empty() {
            let warm: Vec<Sample> = samples.iter().map(|p| p.sample.clone()).collect();
            let outcome = update_block(
                &mut candidate,
                &role,
                target,
                &strategy,
                &warm,
                &[],
                &[],
                head_seed,
            )?;
            if let Some(t) = block.threshold.adjusted(&outcome.novel_scores_after) {
                block.threshold = t;
            }
            for (p, score) in samples.iter().zip(&outcome.novel_scores_after) {
                block.offer_retained(BufferedSample {
                    seq: 0,
                    sample: p.sample.clone(),
                    raw_x: p.raw_x.clone(),
                    score: *score,
                });
            }
            block.freeze_retained();
        }
        self.model = candidate;
        let threshold = block.threshold.value;
        self.blocks.push(block);
        let version = self.record_version(VersionReason::TargetAdded {
            target: target.to_string(),
        })?;
        self.emit(Event::TargetAdded {
            target: target.to_string(),
            warmup_samples: samples.len(),
            threshold,
            version,
        })?;
        Ok(version)
    }

    /// Per-block evaluation plus the fused continual-learning score.
    pub fn eval_report(&self) -> Result<EvalReport> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| (b.id.clone(), b.eval_snapshot()))
            .collect();
        let accepted: Vec<&UpdateResult> = self
            .updates
            .values()
            .filter(|u| u.status == UpdateStatus::Accepted)
            .collect();
        let proposed: Vec<&UpdateResult> = self.updates.values().collect();
        let predictor_errors: Vec<f64> = self
            .blocks
            .iter()
            .filter(|b| b.role != BlockRole::Autoencoder)
            .filter_map(|b| b.live_mean().or(b.eval.fitting_error))
            .collect();
        let accuracy = if predictor_errors.is_empty() {
            self.blocks[0].live_mean().map_or(1.0, components::accuracy)
        } else {
            predictor_errors.iter().map(|e| components::accuracy(*e)).sum::<f64>()
                / predictor_errors.len() as f64
        };
        let mean = |values: Vec<f64>, empty: f64| {
            if values.is_empty() {
                empty
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            }
        };
        let forward = mean(
            accepted
                .iter()
                .map(|u| components::forward_transfer(u.errors.novel_before, u.errors.novel_after))
                .collect(),
            0.0,
        );
        let backward = mean(
            accepted
                .iter()
                .map(|u| components::backward_transfer(u.forgetting_ratio))
                .collect(),
            1.0,
        );
        let stored: usize = self.blocks.iter().map(ModelBlock::stored).sum();
        let storage = components::sample_storage_efficiency(
            stored / self.blocks.len().max(1),
            self.position as usize,
        );
        let mean_time = mean(proposed.iter().map(|u| u.training_time).collect(), 0.0);
        let compute = components::compute_efficiency(self.config.compute_budget_seconds, mean_time);
        let size = components::model_size_efficiency(self.base_param_count, self.model.param_count());
        let values: BTreeMap<String, f64> = [
            ("accuracy", accuracy),
            ("forward_transfer", forward),
            ("backward_transfer", backward),
            ("model_size_efficiency", size),
            ("sample_storage_efficiency", storage),
            ("compute_efficiency", compute),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let weights = self.config.score_weights.clone().unwrap_or_else(equal_weights);
        Ok(EvalReport {
            blocks,
            cl_score: Some(cl_score(&values, &weights)?),
        })
    }

    /// Writes every version plus the per-block buffer metadata to `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        self.versions.write_dir(dir)?;
        let states: Vec<BlockState> = self.blocks.iter().map(ModelBlock::state).collect();
        std::fs::write(dir.join("blocks.json"), serde_json::to_vec_pretty(&states)?)?;
        Ok(())
    }

    /// Exports one block's novelty buffer (including overflow) as CSV.
    pub fn export_novelty_csv<W: Write>(&self, block_id: &str, writer: W) -> Result<()> {
        let block = self.block(block_id)?;
        let items = block.novelty.items().iter().chain(block.novelty.pending());
        novelty::export_buffer_csv(writer, items, block.role.target())
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}
