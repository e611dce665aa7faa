//! CSV loaders for the wind, solar, and grid dataset layouts.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::filter_malfunction;
use crate::sample::RawSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ColumnSpec {
    pub fn new(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn unbounded(name: &str) -> Self {
        Self {
            name: name.into(),
            min: None,
            max: None,
        }
    }

    fn in_range(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub name: String,
    pub timestamp_column: String,
    pub features: Vec<ColumnSpec>,
    pub targets: Vec<ColumnSpec>,
    pub resolution_minutes: i64,
}

const CYCLIC: [&str; 6] = [
    "hour_cos",
    "hour_sin",
    "month_cos",
    "month_sin",
    "season_cos",
    "season_sin",
];

impl CsvSchema {
    /// Hourly wind farm data: seven weather-forecast features and normalized power.
    pub fn wind() -> Self {
        Self {
            name: "wind".into(),
            timestamp_column: "timestamp".into(),
            features: vec![
                ColumnSpec::new("wind_speed_100m", 0.0, 60.0),
                ColumnSpec::new("wind_speed_10m", 0.0, 60.0),
                ColumnSpec::new("wind_direction_zonal", -1.0, 1.0),
                ColumnSpec::new("wind_direction_meridional", -1.0, 1.0),
                ColumnSpec::new("air_pressure", 850.0, 1100.0),
                ColumnSpec::new("air_temperature", -60.0, 60.0),
                ColumnSpec::new("humidity", 0.0, 100.0),
            ],
            targets: vec![ColumnSpec::new("power", 0.0, 1.0)],
            resolution_minutes: 60,
        }
    }

    /// Three-hourly solar data: weather forecasts plus sine/cosine encodings
    /// of hour, month, and season, each mapped to `[0, 1]`.
    pub fn solar() -> Self {
        let mut features = vec![
            ColumnSpec::new("cloud_cover", 0.0, 1.0),
            ColumnSpec::new("air_temperature", -60.0, 60.0),
            ColumnSpec::new("humidity", 0.0, 100.0),
            ColumnSpec::new("air_pressure", 850.0, 1100.0),
            ColumnSpec::new("wind_speed", 0.0, 60.0),
            ColumnSpec::new("direct_radiation", 0.0, 1400.0),
            ColumnSpec::new("diffuse_radiation", 0.0, 1000.0),
            ColumnSpec::new("albedo", 0.0, 1.0),
        ];
        features.extend(CYCLIC.iter().map(|c| ColumnSpec::new(c, 0.0, 1.0)));
        Self {
            name: "solar".into(),
            timestamp_column: "timestamp".into(),
            features,
            targets: vec![ColumnSpec::new("power", 0.0, 1.0)],
            resolution_minutes: 180,
        }
    }

    /// Quarter-hourly grid data: thirteen weather features and one column
    /// per generation or consumption target.
    pub fn grid(targets: &[&str]) -> Self {
        let features = [
            ("temperature_2m", -60.0, 60.0),
            ("dew_point_2m", -60.0, 60.0),
            ("relative_humidity", 0.0, 100.0),
            ("pressure_msl", 850.0, 1100.0),
            ("wind_speed_10m", 0.0, 60.0),
            ("wind_speed_100m", 0.0, 80.0),
            ("wind_direction_zonal", -1.0, 1.0),
            ("wind_direction_meridional", -1.0, 1.0),
            ("cloud_cover_total", 0.0, 1.0),
            ("cloud_cover_low", 0.0, 1.0),
            ("direct_radiation", 0.0, 1400.0),
            ("diffuse_radiation", 0.0, 1000.0),
            ("precipitation", 0.0, 200.0),
        ]
        .into_iter()
        .map(|(n, lo, hi)| ColumnSpec::new(n, lo, hi))
        .collect();
        Self {
            name: "grid".into(),
            timestamp_column: "timestamp".into(),
            features,
            targets: targets.iter().map(|t| ColumnSpec::unbounded(t)).collect(),
            resolution_minutes: 15,
        }
    }

    pub fn by_name(name: &str, targets: &[&str]) -> Result<Self> {
        match name {
            "wind" => Ok(Self::wind()),
            "solar" => Ok(Self::solar()),
            "grid" if !targets.is_empty() => Ok(Self::grid(targets)),
            "grid" => Err(Error::validation("the grid schema needs target columns")),
            other => Err(Error::validation(format!("unknown schema `{other}`"))),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|c| c.name.clone()).collect()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|c| c.name.clone()).collect()
    }

    pub fn resolution(&self) -> Duration {
        Duration::minutes(self.resolution_minutes)
    }
}

/// Sine/cosine encodings of hour of day, month, and season, each mapped to `[0, 1]`.
pub fn cyclic_features(ts: DateTime<Utc>) -> [f64; 6] {
    let enc = |value: f64, period: f64| {
        let a = TAU * value / period;
        [(1.0 + a.cos()) / 2.0, (1.0 + a.sin()) / 2.0]
    };
    let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
    let month = ts.month0() as f64;
    let season = (ts.ordinal0() as f64) / 365.25 * 4.0;
    let [hc, hs] = enc(hour, 24.0);
    let [mc, ms] = enc(month, 12.0);
    let [sc, ss] = enc(season, 4.0);
    [hc, hs, mc, ms, sc, ss]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Out-of-range values and irregular spacing are errors.
    Strict,
    /// Out-of-range values are kept and flagged.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeFlag {
    pub line: u64,
    pub column: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub schema: CsvSchema,
    pub samples: Vec<RawSample>,
    pub flags: Vec<RangeFlag>,
}

impl CsvLoad {
    /// Drops zero-production runs of `target` longer than `max_zero_run`.
    pub fn without_malfunctions(mut self, target: &str, max_zero_run: Duration) -> Result<Self> {
        self.samples = filter_malfunction(
            &self.samples,
            |s| s.timestamp,
            |s| s.y.get(target).copied().flatten(),
            self.schema.resolution(),
            max_zero_run,
        )?;
        Ok(self)
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema, strictness: Strictness) -> Result<CsvLoad> {
    read_csv(std::fs::File::open(path)?, schema, strictness)
}

fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .map(|n| n.and_utc())
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, strictness: Strictness) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };
    let ts_idx = index_of(&schema.timestamp_column)?;
    let feature_idx: Vec<usize> = schema.features.iter().map(|c| index_of(&c.name)).collect::<Result<_>>()?;
    let target_idx: Vec<usize> = schema.targets.iter().map(|c| index_of(&c.name)).collect::<Result<_>>()?;

    let mut samples: Vec<RawSample> = Vec::new();
    let mut flags = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };
        let ts_text = record.get(ts_idx).unwrap_or("");
        let timestamp =
            parse_timestamp(ts_text).ok_or_else(|| row_err(format!("bad timestamp `{ts_text}`")))?;
        if let Some(prev) = samples.last() {
            if timestamp <= prev.timestamp {
                return Err(row_err(format!("timestamp {timestamp} is not after {}", prev.timestamp)));
            }
            let gap = (timestamp - prev.timestamp).num_minutes();
            if strictness == Strictness::Strict && gap % schema.resolution_minutes != 0 {
                return Err(row_err(format!(
                    "spacing of {gap} minutes is not a multiple of {}",
                    schema.resolution_minutes
                )));
            }
        }
        let mut cell = |idx: usize, spec: &ColumnSpec| -> Result<Option<f64>> {
            let text = record.get(idx).unwrap_or("");
            if text.is_empty() || text.eq_ignore_ascii_case("nan") {
                return Ok(None);
            }
            let v: f64 = text
                .parse()
                .map_err(|_| row_err(format!("column `{}`: cannot parse `{text}`", spec.name)))?;
            if !spec.in_range(v) {
                if strictness == Strictness::Strict {
                    return Err(row_err(format!("column `{}`: {v} is out of range", spec.name)));
                }
                flags.push(RangeFlag {
                    line,
                    column: spec.name.clone(),
                    value: v,
                });
            }
            Ok(Some(v))
        };
        let x = feature_idx
            .iter()
            .zip(&schema.features)
            .map(|(&i, spec)| cell(i, spec))
            .collect::<Result<Vec<_>>>()?;
        let y = target_idx
            .iter()
            .zip(&schema.targets)
            .map(|(&i, spec)| Ok((spec.name.clone(), cell(i, spec)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        samples.push(RawSample { timestamp, x, y });
    }
    Ok(CsvLoad {
        schema: schema.clone(),
        samples,
        flags,
    })
}
