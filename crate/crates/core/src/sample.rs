use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// An observation as it arrives from a source: features and targets may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp: DateTime<Utc>,
    pub x: Vec<Option<f64>>,
    #[serde(default)]
    pub y: BTreeMap<String, Option<f64>>,
}

impl RawSample {
    pub fn complete(timestamp: DateTime<Utc>, x: Vec<f64>, y: BTreeMap<String, f64>) -> Self {
        Self {
            timestamp,
            x: x.into_iter().map(Some).collect(),
            y: y.into_iter().map(|(k, v)| (k, Some(v))).collect(),
        }
    }
}

/// A preprocessed observation: scaled features and whichever targets are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: DateTime<Utc>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: BTreeMap<String, f64>,
}

impl Sample {
    pub fn target(&self, name: &str) -> Option<f64> {
        self.y.get(name).copied()
    }
}
