//! Append-only run log: one record per event, newline-delimited JSON on disk.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::metrics::EvalReport;
use crate::novelty::{Classification, Threshold};
use crate::strategies::UpdateResult;

use super::decision::{DecisionSource, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Novelty,
    Pending,
    Familiarity,
    /// Scored but withheld from buffers by autoencoder gating.
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Bootstrapped {
        samples: usize,
        version: u64,
        thresholds: BTreeMap<String, f64>,
    },
    Prediction {
        seq: u64,
        target: String,
        value: f64,
    },
    Score {
        seq: u64,
        block: String,
        score: f64,
        threshold: f64,
        classification: Classification,
        destination: Destination,
    },
    SampleDropped {
        seq: u64,
        reason: String,
    },
    UpdateTriggered {
        block: String,
        fill: usize,
        capacity: usize,
    },
    UpdateStarted {
        update_id: u64,
        block: String,
        base_version: u64,
    },
    UpdateProposed {
        result: UpdateResult,
        trained_samples: Vec<u64>,
    },
    UpdateFailed {
        update_id: u64,
        block: String,
        error: String,
    },
    DecisionApplied {
        update_id: Option<u64>,
        verdict: Verdict,
        issued_by: DecisionSource,
        note: Option<String>,
    },
    BuffersEmptied {
        block: String,
        novelty: Vec<u64>,
        familiarity: Vec<u64>,
    },
    SamplesDemoted {
        block: String,
        seqs: Vec<u64>,
    },
    FamiliarEvicted {
        block: String,
        seqs: Vec<u64>,
    },
    ThresholdAdjusted {
        block: String,
        old: f64,
        new: f64,
    },
    ThresholdAdjustmentSkipped {
        block: String,
        reason: String,
    },
    ScalerUpdated {
        scaler_version: u64,
    },
    BuffersRescaled {
        scaler_version: u64,
        samples: usize,
    },
    VersionCreated {
        version: u64,
        reason: String,
    },
    RolledBack {
        to_version: u64,
        new_version: u64,
    },
    TargetAdded {
        target: String,
        warmup_samples: usize,
        threshold: f64,
        version: u64,
    },
    Hyperparameter {
        block: String,
        field: String,
        old: Value,
        new: Value,
    },
    Warning {
        message: String,
    },
    Checkpoint {
        label: String,
        report: EvalReport,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Bootstrapped { .. } => "bootstrapped",
            Event::Prediction { .. } => "prediction",
            Event::Score { .. } => "score",
            Event::SampleDropped { .. } => "sample_dropped",
            Event::UpdateTriggered { .. } => "update_triggered",
            Event::UpdateStarted { .. } => "update_started",
            Event::UpdateProposed { .. } => "update_proposed",
            Event::UpdateFailed { .. } => "update_failed",
            Event::DecisionApplied { .. } => "decision_applied",
            Event::BuffersEmptied { .. } => "buffers_emptied",
            Event::SamplesDemoted { .. } => "samples_demoted",
            Event::FamiliarEvicted { .. } => "familiar_evicted",
            Event::ThresholdAdjusted { .. } => "threshold_adjusted",
            Event::ThresholdAdjustmentSkipped { .. } => "threshold_adjustment_skipped",
            Event::ScalerUpdated { .. } => "scaler_updated",
            Event::BuffersRescaled { .. } => "buffers_rescaled",
            Event::VersionCreated { .. } => "version_created",
            Event::RolledBack { .. } => "rolled_back",
            Event::TargetAdded { .. } => "target_added",
            Event::Hyperparameter { .. } => "hyperparameter",
            Event::Warning { .. } => "warning",
            Event::Checkpoint { .. } => "checkpoint",
        }
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    /// Wall clock at the time of logging.
    pub timestamp: DateTime<Utc>,
    /// Stream position: the sample being ingested, or for events between
    /// samples, the index of the next sample.
    pub position: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl LogRecord {
    /// Zeroes every wall-clock field so logs of two runs can be compared.
    pub fn without_wall_clock(&self) -> LogRecord {
        let mut out = self.clone();
        out.timestamp = DateTime::<Utc>::UNIX_EPOCH;
        match &mut out.event {
            Event::UpdateProposed { result, .. } => result.training_time = 0.0,
            Event::Checkpoint { report, .. } => {
                for b in report.blocks.values_mut() {
                    b.training_time = 0.0;
                }
                report.cl_score = None;
            }
            _ => {}
        }
        out
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Applies [`LogRecord::without_wall_clock`] to a whole log.
pub fn strip_wall_clock(records: &[LogRecord]) -> Vec<LogRecord> {
    records.iter().map(LogRecord::without_wall_clock).collect()
}

pub fn parse_run_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// In-memory append-only log with an optional line sink.
pub struct EventLog {
    records: Vec<LogRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("records", &self.records.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl Clone for EventLog {
    /// Clones the records; the sink stays with the original.
    fn clone(&self) -> Self {
        Self {
            records: self.records.clone(),
            sink: None,
        }
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            sink: None,
        }
    }

    pub fn set_sink(&mut self, mut sink: Box<dyn Write + Send>) -> Result<()> {
        for r in &self.records {
            writeln!(sink, "{}", r.to_json_line()?)?;
        }
        self.sink = Some(sink);
        Ok(())
    }

    pub fn append(&mut self, position: u64, event: Event) -> Result<&LogRecord> {
        let record = LogRecord {
            seq: self.records.len() as u64 + 1,
            timestamp: Utc::now(),
            position,
            event,
        };
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{}", record.to_json_line()?)?;
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn last_seq(&self) -> u64 {
        self.records.len() as u64
    }

    /// Records with `seq > after`, in order.
    pub fn since(&self, after: u64) -> &[LogRecord] {
        let start = (after as usize).min(self.records.len());
        &self.records[start..]
    }
}

pub(crate) fn threshold_values<'a>(
    blocks: impl Iterator<Item = (&'a String, &'a Threshold)>,
) -> BTreeMap<String, f64> {
    blocks.map(|(k, t)| (k.clone(), t.value)).collect()
}
