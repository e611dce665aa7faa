use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::WeightSnapshot;
use crate::novelty::Threshold;
use crate::preprocess::Scaler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VersionReason {
    Initial,
    Accepted { update_id: u64 },
    RolledBack { to: u64 },
    TargetAdded { target: String },
}

impl VersionReason {
    pub fn describe(&self) -> String {
        match self {
            VersionReason::Initial => "initial".into(),
            VersionReason::Accepted { update_id } => format!("accepted update {update_id}"),
            VersionReason::RolledBack { to } => format!("rolled back to version {to}"),
            VersionReason::TargetAdded { target } => format!("added target {target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VersionEntry {
    pub version: u64,
    pub parent: Option<u64>,
    pub reason: VersionReason,
    /// Samples ingested when the version was created.
    pub position: u64,
    pub snapshot: WeightSnapshot,
    pub scaler: Scaler,
    pub scaler_version: u64,
    pub thresholds: BTreeMap<String, Threshold>,
}

#[derive(Debug, Clone, Default)]
pub struct VersionStore {
    entries: Vec<VersionEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    version: u64,
    parent: Option<u64>,
    reason: VersionReason,
    position: u64,
    weights: String,
    scaler: String,
    scaler_version: u64,
    thresholds: BTreeMap<String, Threshold>,
}

impl VersionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_version(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    pub fn push(&mut self, mut entry: VersionEntry) -> u64 {
        entry.version = self.next_version();
        entry.parent = self.entries.last().map(|e| e.version);
        self.entries.push(entry);
        self.entries.len() as u64
    }

    pub fn get(&self, version: u64) -> Result<&VersionEntry> {
        version
            .checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
            .ok_or_else(|| Error::NotFound(format!("version {version}")))
    }

    pub fn current(&self) -> Option<&VersionEntry> {
        self.entries.last()
    }

    pub fn entries(&self) -> &[VersionEntry] {
        &self.entries
    }

    /// Writes `v<N>.dlws` and `v<N>.scaler` per version plus `manifest.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let weights = format!("v{}.dlws", e.version);
            let scaler = format!("v{}.scaler", e.version);
            e.snapshot.write_to(&dir.join(&weights))?;
            fs::write(dir.join(&scaler), e.scaler.to_record())?;
            manifest.push(ManifestEntry {
                version: e.version,
                parent: e.parent,
                reason: e.reason.clone(),
                position: e.position,
                weights,
                scaler,
                scaler_version: e.scaler_version,
                thresholds: e.thresholds.clone(),
            });
        }
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: Vec<ManifestEntry> =
            serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let mut entries = Vec::with_capacity(manifest.len());
        for (i, m) in manifest.into_iter().enumerate() {
            if m.version != i as u64 + 1 {
                return Err(Error::Format(format!(
                    "manifest entry {} has version {}",
                    i + 1,
                    m.version
                )));
            }
            entries.push(VersionEntry {
                version: m.version,
                parent: m.parent,
                reason: m.reason,
                position: m.position,
                snapshot: WeightSnapshot::read_from(&dir.join(&m.weights))?,
                scaler: Scaler::from_record(&fs::read_to_string(dir.join(&m.scaler))?)?,
                scaler_version: m.scaler_version,
                thresholds: m.thresholds,
            });
        }
        Ok(Self { entries })
    }
}
