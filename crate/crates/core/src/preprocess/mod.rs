//! Preprocessing: missing-value filling, outlier clipping and feature scaling.

mod impute;
mod malfunction;
mod scaler;

pub use impute::{fill_missing, ImputeRule, ImputeStrategy};
pub use malfunction::filter_malfunction;
pub use scaler::{FeatureParams, Moments, Range, Scaler, ScalerKind};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{RawSample, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub scaler: ScalerKind,
    pub impute: ImputeStrategy,
    /// Clip targets into `[0, 1]` (capacity-normalized power).
    pub clip_targets: bool,
    /// Widen scaler parameters with the raw features of accepted novel samples.
    pub update_scaler_on_accept: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            scaler: ScalerKind::MinMax,
            impute: ImputeStrategy::ForwardFill,
            clip_targets: true,
            update_scaler_on_accept: true,
        }
    }
}

/// A sample after preprocessing, keeping the filled raw features for later rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processed {
    pub sample: Sample,
    pub raw_x: Vec<f64>,
}

/// Streaming preprocessing state: the fitted scaler, its version, and the
/// last valid value per feature for forward filling.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    config: PreprocessConfig,
    scaler: Scaler,
    version: u64,
    last_seen: Vec<Option<f64>>,
}

impl Preprocessor {
    /// Fits the scaler on a batch after filling gaps column by column.
    pub fn fit(names: &[String], rows: &[Vec<Option<f64>>], config: PreprocessConfig) -> Result<Self> {
        let filled = impute_rows(rows, names.len(), ImputeRule { strategy: config.impute })?;
        let scaler = Scaler::fit(config.scaler, names, &filled)?;
        let last_seen = (0..names.len())
            .map(|j| filled.iter().rev().find_map(|r| r[j]))
            .collect();
        Ok(Self {
            config,
            scaler,
            version: 1,
            last_seen,
        })
    }

    pub fn from_scaler(scaler: Scaler, config: PreprocessConfig) -> Self {
        let width = scaler.feature_count();
        Self {
            config,
            scaler,
            version: 1,
            last_seen: vec![None; width],
        }
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn feature_count(&self) -> usize {
        self.scaler.feature_count()
    }

    /// Fills, scales and clips one raw sample. Returns `None` when the
    /// sample is dropped under the `drop_row` rule.
    pub fn process(&mut self, raw: &RawSample) -> Result<Option<Processed>> {
        if raw.x.len() != self.feature_count() {
            return Err(Error::shape(format!(
                "sample has {} features, expected {}",
                raw.x.len(),
                self.feature_count()
            )));
        }
        let mut raw_x = Vec::with_capacity(raw.x.len());
        for (j, value) in raw.x.iter().enumerate() {
            match value.filter(|v| v.is_finite()) {
                Some(v) => raw_x.push(v),
                None if self.config.impute == ImputeStrategy::DropRow => return Ok(None),
                None => raw_x.push(self.last_seen[j].unwrap_or_else(|| self.scaler.center(j))),
            }
        }
        for (slot, v) in self.last_seen.iter_mut().zip(&raw_x) {
            *slot = Some(*v);
        }
        let x = self.scaler.transform(&raw_x)?;
        let y: BTreeMap<String, f64> = raw
            .y
            .iter()
            .filter_map(|(k, v)| v.filter(|v| v.is_finite()).map(|v| (k.clone(), v)))
            .map(|(k, v)| (k, if self.config.clip_targets { v.clamp(0.0, 1.0) } else { v }))
            .collect();
        Ok(Some(Processed {
            sample: Sample {
                timestamp: raw.timestamp,
                x,
                y,
            },
            raw_x,
        }))
    }

    pub fn rescale(&self, raw_x: &[f64]) -> Result<Vec<f64>> {
        self.scaler.transform(raw_x)
    }

    /// Applies a streaming scaler update. Returns `true` when the parameters changed.
    pub fn update_scaler(&mut self, raw_rows: &[Vec<f64>]) -> Result<bool> {
        let rows: Vec<Vec<Option<f64>>> = raw_rows
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        let updated = self.scaler.partial_update(&rows)?;
        if updated == self.scaler {
            return Ok(false);
        }
        self.scaler = updated;
        self.version += 1;
        Ok(true)
    }

    pub fn restore_scaler(&mut self, scaler: Scaler, version: u64) -> Result<()> {
        if scaler.feature_count() != self.feature_count() {
            return Err(Error::shape("restored scaler has a different feature count"));
        }
        self.scaler = scaler;
        self.version = version;
        Ok(())
    }
}

/// Fills each column independently; rows with gaps are removed under `drop_row`.
pub fn impute_rows(
    rows: &[Vec<Option<f64>>],
    width: usize,
    rule: ImputeRule,
) -> Result<Vec<Vec<Option<f64>>>> {
    if let Some(row) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::shape(format!(
            "row has {} features, expected {width}",
            row.len()
        )));
    }
    if rule.strategy == ImputeStrategy::DropRow {
        return Ok(rows
            .iter()
            .filter(|r| r.iter().all(Option::is_some))
            .cloned()
            .collect());
    }
    let mut out = rows.to_vec();
    for j in 0..width {
        let column: Vec<Option<f64>> = rows.iter().map(|r| r[j]).collect();
        for (row, v) in out.iter_mut().zip(fill_missing(&column, rule)?) {
            row[j] = v;
        }
    }
    Ok(out)
}
