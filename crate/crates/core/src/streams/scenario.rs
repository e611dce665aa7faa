//! Scripted runs: a seed, an instance configuration, and an ordered list of
//! stream segments, drifts, target additions, edits, and checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{load_csv, CsvSchema, Strictness};
use super::synthetic::{DriftSpec, SyntheticConfig, SyntheticStream};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::orchestrator::{
    ClearInstance, Decision, HyperparameterEdit, InstanceConfig, LogRecord, Mode, Verdict,
};
use crate::sample::RawSample;
use crate::nn::HeadSpec;
use crate::strategies::StrategySpec;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    #[default]
    Synthetic,
    Csv {
        path: PathBuf,
        schema: String,
        #[serde(default)]
        targets: Vec<String>,
        #[serde(default)]
        strictness: Strictness,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub source: SourceSpec,
    pub count: usize,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            source: SourceSpec::Synthetic,
            count: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioEvent {
    StreamSegment {
        count: usize,
        #[serde(default)]
        source: SourceSpec,
    },
    Drift {
        drift: DriftSpec,
    },
    AddTarget {
        target_id: String,
        #[serde(default)]
        head_spec: Option<HeadSpec>,
        #[serde(default)]
        warmup_count: usize,
        #[serde(default)]
        strategy: Option<StrategySpec>,
    },
    SetHyperparameters {
        edits: Vec<HyperparameterEdit>,
    },
    /// Applies a decision; accept and reject without an id target the pending update.
    Decision {
        decision: Decision,
    },
    Checkpoint {
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub seed: u64,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSpec,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    /// Directory relative CSV paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<Self> {
        let script: Self =
            toml::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .events
            .iter()
            .any(|e| matches!(e, ScenarioEvent::StreamSegment { .. }))
        {
            return Err(Error::validation("a scenario needs at least one stream_segment"));
        }
        for (index, event) in self.events.iter().enumerate() {
            if let ScenarioEvent::Drift { drift } = event {
                drift.validate().map_err(|e| Error::Scenario {
                    index,
                    source: Box::new(e),
                })?;
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let mut script = Self::from_toml(&fs::read_to_string(path)?)?;
        script.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(script)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("scenario: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub label: String,
    pub position: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// The events that produced this output.
    pub script: ScenarioScript,
    pub instance: ClearInstance,
    pub checkpoints: Vec<CheckpointReport>,
    pub report: EvalReport,
}

/// Files a complete run directory contains besides the snapshot files.
pub const RUN_FILES: [&str; 6] = [
    "scenario.toml",
    "run_log.ndjson",
    "report.csv",
    "report.txt",
    "checkpoints.json",
    "snapshots/manifest.json",
];

impl RunOutput {
    pub fn records(&self) -> &[LogRecord] {
        self.instance.log().records()
    }

    /// Writes the scenario (with CSV inputs copied under `data/`), the run
    /// log, reports, checkpoints, and `snapshots/` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let script = portable_script(&self.script, dir)?;
        fs::write(dir.join("scenario.toml"), script.to_toml()?)?;
        let mut log = String::new();
        for r in self.records() {
            log.push_str(&r.to_json_line()?);
            log.push('\n');
        }
        fs::write(dir.join("run_log.ndjson"), log)?;
        fs::write(dir.join("report.csv"), self.report.to_csv())?;
        fs::write(dir.join("report.txt"), self.report.to_text())?;
        fs::write(
            dir.join("checkpoints.json"),
            serde_json::to_vec_pretty(&self.checkpoints)?,
        )?;
        self.instance.write_snapshots(&dir.join("snapshots"))
    }
}

fn portable_source(source: &mut SourceSpec, base: &Path, dir: &Path) -> Result<()> {
    if let SourceSpec::Csv { path, .. } = source {
        let name = path
            .file_name()
            .ok_or_else(|| Error::validation(format!("CSV path `{}` has no file name", path.display())))?;
        let local = Path::new("data").join(name);
        fs::create_dir_all(dir.join("data"))?;
        fs::copy(base.join(&*path), dir.join(&local))?;
        *path = local;
    }
    Ok(())
}

/// Copy of `script` whose CSV sources point at copies inside `dir`.
fn portable_script(script: &ScenarioScript, dir: &Path) -> Result<ScenarioScript> {
    let mut out = script.clone();
    portable_source(&mut out.bootstrap.source, &script.base_dir, dir)?;
    for event in &mut out.events {
        if let ScenarioEvent::StreamSegment { source, .. } = event {
            portable_source(source, &script.base_dir, dir)?;
        }
    }
    out.base_dir = dir.to_path_buf();
    Ok(out)
}

/// Executes a script step by step. Holds the stream sources between steps so
/// a caller (such as a server) can interleave its own commands.
pub struct ScenarioRunner {
    script: ScenarioScript,
    synthetic: SyntheticStream,
    csv: BTreeMap<PathBuf, (Vec<RawSample>, usize)>,
    instance: ClearInstance,
    checkpoints: Vec<CheckpointReport>,
    next_event: usize,
    segment: Option<(SourceSpec, usize)>,
    inline_updates: bool,
}

/// Result of [`ScenarioRunner::next_step`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    /// A drawn sample the caller is expected to ingest.
    Sample(RawSample),
    /// A non-stream event at this index was applied.
    Applied(usize),
    Finished,
}

const BOOTSTRAP_SALT: u64 = 0xB007;
const TARGET_SALT: u64 = 0x7A26;

impl ScenarioRunner {
    pub fn new(script: ScenarioScript) -> Result<Self> {
        let synthetic = SyntheticStream::new(script.synthetic.clone(), script.seed)?;
        let mut csv = BTreeMap::new();
        let mut config = script.instance.clone();
        config.seed = script.seed;
        let warmup = match &script.bootstrap.source {
            SourceSpec::Synthetic => {
                fill_names(&mut config, synthetic.feature_names(), synthetic.target_names());
                synthetic.side_samples(script.bootstrap.count, BOOTSTRAP_SALT)
            }
            source @ SourceSpec::Csv { .. } => {
                let schema = schema_of(source)?;
                fill_names(&mut config, schema.feature_names(), schema.target_names());
                take_csv(&mut csv, &script.base_dir, source, script.bootstrap.count)?
            }
        };
        let instance = ClearInstance::bootstrap(config, &warmup)?;
        Ok(Self {
            script,
            synthetic,
            csv,
            instance,
            checkpoints: Vec::new(),
            next_event: 0,
            segment: None,
            inline_updates: true,
        })
    }

    pub fn instance(&self) -> &ClearInstance {
        &self.instance
    }

    pub fn instance_mut(&mut self) -> &mut ClearInstance {
        &mut self.instance
    }

    pub fn is_finished(&self) -> bool {
        self.next_event >= self.script.events.len()
    }

    pub fn checkpoints(&self) -> &[CheckpointReport] {
        &self.checkpoints
    }

    /// Draws the next `count` raw samples of a source without ingesting them.
    pub fn draw(&mut self, source: &SourceSpec, count: usize) -> Result<Vec<RawSample>> {
        match source {
            SourceSpec::Synthetic => Ok(self.synthetic.take(count)),
            SourceSpec::Csv { .. } => take_csv(&mut self.csv, &self.script.base_dir, source, count),
        }
    }

    /// When off, triggered updates are left for the caller to run.
    pub fn set_inline_updates(&mut self, on: bool) {
        self.inline_updates = on;
    }

    /// The event [`next_step`](Self::next_step) would apply next, unless a
    /// stream segment is still being drawn.
    pub fn peek_event(&self) -> Option<&ScenarioEvent> {
        match self.segment {
            Some(_) => None,
            None => self.script.events.get(self.next_event),
        }
    }

    /// Ingests one sample and, when nothing awaits an operator, runs queued updates.
    pub fn feed(&mut self, raw: &RawSample) -> Result<()> {
        self.instance.ingest(raw)?;
        if self.inline_updates {
            self.instance.process_triggers()?;
        }
        Ok(())
    }

    /// Advances the script by one sample or one event. Samples are returned
    /// rather than ingested.
    pub fn next_step(&mut self) -> Result<ScriptStep> {
        loop {
            if let Some((source, left)) = self.segment.take() {
                if left > 0 {
                    if let Some(raw) = self.draw(&source, 1)?.pop() {
                        self.segment = Some((source, left - 1));
                        return Ok(ScriptStep::Sample(raw));
                    }
                }
                continue;
            }
            match self.script.events.get(self.next_event).cloned() {
                None => return Ok(ScriptStep::Finished),
                Some(ScenarioEvent::StreamSegment { count, source }) => {
                    self.next_event += 1;
                    self.segment = Some((source, count));
                }
                Some(_) => {
                    let index = self.next_event;
                    self.step()?;
                    return Ok(ScriptStep::Applied(index));
                }
            }
        }
    }

    /// Runs the next scripted event. Returns `false` once the script is done.
    pub fn step(&mut self) -> Result<bool> {
        let Some(event) = self.script.events.get(self.next_event).cloned() else {
            return Ok(false);
        };
        let index = self.next_event;
        self.next_event += 1;
        self.run_event(event).map_err(|e| Error::Scenario {
            index,
            source: Box::new(e),
        })?;
        Ok(true)
    }

    fn run_event(&mut self, event: ScenarioEvent) -> Result<()> {
        match event {
            ScenarioEvent::StreamSegment { count, source } => {
                for _ in 0..count {
                    let Some(raw) = self.draw(&source, 1)?.pop() else {
                        break;
                    };
                    self.feed(&raw)?;
                }
            }
            ScenarioEvent::Drift { drift } => self.synthetic.apply_drift(&drift)?,
            ScenarioEvent::AddTarget {
                target_id,
                head_spec,
                warmup_count,
                strategy,
            } => {
                if !self.synthetic.target_names().contains(&target_id) {
                    self.synthetic.add_target(&target_id)?;
                }
                let salt = TARGET_SALT ^ self.instance.position();
                let samples = self.synthetic.side_samples(warmup_count, salt);
                self.instance.add_target(&target_id, head_spec, strategy, &samples)?;
            }
            ScenarioEvent::SetHyperparameters { edits } => self.instance.set_hyperparameters(&edits)?,
            ScenarioEvent::Decision { mut decision } => {
                if matches!(decision.verdict, Verdict::Accept | Verdict::Reject) && decision.update_id.is_none() {
                    decision.update_id = match self.instance.mode() {
                        Mode::AwaitingDecision { update_id, .. } => Some(*update_id),
                        _ => return Err(Error::Conflict("no update awaits a decision".into())),
                    };
                }
                self.instance.apply_decision(decision)?;
                if self.inline_updates {
                    self.instance.process_triggers()?;
                }
            }
            ScenarioEvent::Checkpoint { label } => self.checkpoint(&label)?,
        }
        Ok(())
    }

    pub fn checkpoint(&mut self, label: &str) -> Result<()> {
        let report = self.instance.checkpoint(label)?;
        self.checkpoints.push(CheckpointReport {
            label: label.to_string(),
            position: self.instance.position(),
            report,
        });
        Ok(())
    }

    /// Output as of now. The script is cut to the events already run, so
    /// replaying it reproduces the current state.
    pub fn output(&self) -> Result<RunOutput> {
        let mut script = self.script.clone();
        script.events.truncate(self.next_event);
        Ok(RunOutput {
            script,
            instance: self.instance.clone(),
            checkpoints: self.checkpoints.clone(),
            report: self.instance.eval_report()?,
        })
    }

    pub fn finish(mut self) -> Result<RunOutput> {
        while self.step()? {}
        let report = self.instance.eval_report()?;
        self.instance.flush_log()?;
        Ok(RunOutput {
            script: self.script,
            instance: self.instance,
            checkpoints: self.checkpoints,
            report,
        })
    }
}

fn fill_names(config: &mut InstanceConfig, features: Vec<String>, targets: Vec<String>) {
    if config.features.is_empty() {
        config.features = features;
    }
    if config.targets.is_empty() {
        config.targets = targets;
    }
}

fn schema_of(source: &SourceSpec) -> Result<CsvSchema> {
    match source {
        SourceSpec::Csv { schema, targets, .. } => {
            let targets: Vec<&str> = targets.iter().map(String::as_str).collect();
            CsvSchema::by_name(schema, &targets)
        }
        SourceSpec::Synthetic => Err(Error::validation("synthetic source has no CSV schema")),
    }
}

fn take_csv(
    cache: &mut BTreeMap<PathBuf, (Vec<RawSample>, usize)>,
    base: &Path,
    source: &SourceSpec,
    count: usize,
) -> Result<Vec<RawSample>> {
    let SourceSpec::Csv { path, strictness, .. } = source else {
        return Err(Error::validation("not a CSV source"));
    };
    let full = base.join(path);
    if !cache.contains_key(&full) {
        let load = load_csv(&full, &schema_of(source)?, *strictness)?;
        cache.insert(full.clone(), (load.samples, 0));
    }
    let (rows, cursor) = cache.get_mut(&full).expect("inserted above");
    let end = (*cursor + count).min(rows.len());
    let out = rows[*cursor..end].to_vec();
    *cursor = end;
    Ok(out)
}

/// Runs a script from start to finish.
pub fn replay(script: &ScenarioScript) -> Result<RunOutput> {
    ScenarioRunner::new(script.clone())?.finish()
}
