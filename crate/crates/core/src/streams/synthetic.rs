//! Seeded synthetic regression stream with scripted drift.
//!
//! Features follow an AR(1) process around a periodic mean, clipped to
//! `[0, 1]`. Each target is `0.5 + m * (g(x) - 0.5) + noise`, clipped, with
//! `g` a smooth power-curve-like function and `m` the mapping coefficient.
//! Input drifts shift the features; mapping drifts change `m`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::derive_seed;
use crate::sample::RawSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    None,
    AbruptInput,
    GradualInput,
    AbruptMapping,
    GradualMapping,
}

/// `onset` counts samples from the point the drift is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    #[serde(default)]
    pub onset: usize,
    /// Samples over which a gradual drift reaches full magnitude.
    #[serde(default)]
    pub ramp: usize,
    /// Feature shift for input drifts; the new mapping coefficient for
    /// mapping drifts (1 is the original mapping, -1 mirrors it).
    #[serde(default)]
    pub magnitude: f64,
}

impl DriftSpec {
    pub fn none() -> Self {
        Self {
            kind: DriftKind::None,
            onset: 0,
            ramp: 0,
            magnitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.magnitude.is_finite() {
            return Err(Error::validation("drift magnitude must be finite"));
        }
        if matches!(self.kind, DriftKind::GradualInput | DriftKind::GradualMapping) && self.ramp == 0 {
            return Err(Error::validation("gradual drift needs a ramp of at least 1 sample"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub features: usize,
    pub targets: Vec<String>,
    pub resolution_minutes: i64,
    pub start: DateTime<Utc>,
    /// Half-width of the uniform target noise.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            features: 7,
            targets: vec!["p_1".into()],
            resolution_minutes: 60,
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            noise: 0.03,
        }
    }
}

impl SyntheticConfig {
    pub fn feature_names(&self) -> Vec<String> {
        (0..self.features).map(|j| format!("x{j}")).collect()
    }
}

const PERIODS: [f64; 7] = [24.0, 12.0, 8.0, 48.0, 36.0, 6.0, 16.0];
const AR_PHI: f64 = 0.8;
const AR_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ramp {
    from: f64,
    to: f64,
    start: u64,
    len: u64,
}

impl Ramp {
    fn constant(v: f64) -> Self {
        Self {
            from: v,
            to: v,
            start: 0,
            len: 0,
        }
    }

    fn at(&self, t: u64) -> f64 {
        if t < self.start {
            self.from
        } else if self.len == 0 {
            self.to
        } else {
            let frac = ((t - self.start + 1) as f64 / self.len as f64).min(1.0);
            self.from + (self.to - self.from) * frac
        }
    }
}

#[derive(Debug, Clone)]
struct TargetCurve {
    name: String,
    center: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticStream {
    config: SyntheticConfig,
    seed: u64,
    rng: ChaCha8Rng,
    t: u64,
    ar: Vec<f64>,
    phases: Vec<f64>,
    signs: Vec<f64>,
    shift: Ramp,
    mapping: Ramp,
    targets: Vec<TargetCurve>,
}

impl SyntheticStream {
    pub fn new(config: SyntheticConfig, seed: u64) -> Result<Self> {
        if config.features == 0 {
            return Err(Error::validation("synthetic stream needs at least one feature"));
        }
        if config.resolution_minutes <= 0 {
            return Err(Error::validation("resolution_minutes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..config.features).map(|_| rng.gen_range(0.0..TAU)).collect();
        let signs = (0..config.features)
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let names = config.targets.clone();
        let mut stream = Self {
            ar: vec![0.0; config.features],
            config: SyntheticConfig {
                targets: Vec::new(),
                ..config
            },
            seed,
            rng,
            t: 0,
            phases,
            signs,
            shift: Ramp::constant(0.0),
            mapping: Ramp::constant(1.0),
            targets: Vec::new(),
        };
        for name in names {
            stream.add_target(&name)?;
        }
        Ok(stream)
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.config.feature_names()
    }

    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.name.clone()).collect()
    }

    /// Samples generated so far.
    pub fn position(&self) -> u64 {
        self.t
    }

    /// Adds a target whose curve is derived from the stream seed and its index.
    pub fn add_target(&mut self, name: &str) -> Result<()> {
        if self.targets.iter().any(|t| t.name == name) {
            return Err(Error::Conflict(format!("target `{name}` already exists")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0xC0 + self.targets.len() as u64));
        self.targets.push(TargetCurve {
            name: name.to_string(),
            center: rng.gen_range(0.35..0.65),
        });
        self.config.targets.push(name.to_string());
        Ok(())
    }

    /// Schedules a drift relative to the current position.
    pub fn apply_drift(&mut self, drift: &DriftSpec) -> Result<()> {
        drift.validate()?;
        let start = self.t + drift.onset as u64;
        let len = match drift.kind {
            DriftKind::GradualInput | DriftKind::GradualMapping => drift.ramp as u64,
            _ => 0,
        };
        match drift.kind {
            DriftKind::None => {}
            DriftKind::AbruptInput | DriftKind::GradualInput => {
                self.shift = Ramp {
                    from: self.shift.at(start.saturating_sub(1)),
                    to: drift.magnitude,
                    start,
                    len,
                };
            }
            DriftKind::AbruptMapping | DriftKind::GradualMapping => {
                self.mapping = Ramp {
                    from: self.mapping.at(start.saturating_sub(1)),
                    to: drift.magnitude,
                    start,
                    len,
                };
            }
        }
        Ok(())
    }

    fn curve(center: f64, x: &[f64]) -> f64 {
        let lead = 1.0 / (1.0 + (-10.0 * (x[0] - center)).exp());
        let inter = match x {
            [_, a, b, ..] => a * b,
            [_, a] => *a,
            _ => x[0],
        };
        0.8 * lead + 0.2 * inter
    }

    pub fn next_sample(&mut self) -> RawSample {
        let t = self.t;
        let shift = self.shift.at(t);
        let m = self.mapping.at(t);
        let mut x = Vec::with_capacity(self.config.features);
        for j in 0..self.config.features {
            let innovation = self.rng.gen_range(-AR_SPREAD..AR_SPREAD);
            self.ar[j] = AR_PHI * self.ar[j] + innovation;
            let period = PERIODS[j % PERIODS.len()];
            let base = 0.5 + 0.3 * (TAU * t as f64 / period + self.phases[j]).sin() + self.ar[j];
            x.push((base + self.signs[j] * shift).clamp(0.0, 1.0));
        }
        let mut y = BTreeMap::new();
        for target in &self.targets {
            let g = Self::curve(target.center, &x);
            let noise = if self.config.noise > 0.0 {
                self.rng.gen_range(-self.config.noise..self.config.noise)
            } else {
                0.0
            };
            y.insert(target.name.clone(), Some((0.5 + m * (g - 0.5) + noise).clamp(0.0, 1.0)));
        }
        let timestamp =
            self.config.start + Duration::minutes(self.config.resolution_minutes * t as i64);
        self.t += 1;
        RawSample {
            timestamp,
            x: x.into_iter().map(Some).collect(),
            y,
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<RawSample> {
        (0..n).map(|_| self.next_sample()).collect()
    }

    /// Samples from the current regime drawn with independent noise, without
    /// advancing this stream.
    pub fn side_samples(&self, n: usize, salt: u64) -> Vec<RawSample> {
        let mut fork = self.clone();
        fork.rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, salt));
        fork.take(n)
    }
}

/// `n` samples from a fresh stream with `drift` applied at position 0.
pub fn generate(drift: &DriftSpec, n: usize, seed: u64, config: &SyntheticConfig) -> Result<Vec<RawSample>> {
    let mut stream = SyntheticStream::new(config.clone(), seed)?;
    stream.apply_drift(drift)?;
    Ok(stream.take(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_target(samples: &[RawSample]) -> f64 {
        samples.iter().map(|s| s.y["p_1"].unwrap()).sum::<f64>() / samples.len() as f64
    }

    #[test]
    fn seeded_and_bounded() {
        let cfg = SyntheticConfig::default();
        let a = generate(&DriftSpec::none(), 200, 5, &cfg).unwrap();
        let b = generate(&DriftSpec::none(), 200, 5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flat_map(|s| &s.x).all(|v| (0.0..=1.0).contains(&v.unwrap())));
        assert_eq!(a[1].timestamp - a[0].timestamp, Duration::hours(1));
        assert_ne!(a, generate(&DriftSpec::none(), 200, 6, &cfg).unwrap());
    }

    #[test]
    fn abrupt_mapping_mirrors_targets() {
        let cfg = SyntheticConfig {
            noise: 0.0,
            ..SyntheticConfig::default()
        };
        let drift = DriftSpec {
            kind: DriftKind::AbruptMapping,
            onset: 10,
            ramp: 0,
            magnitude: -1.0,
        };
        let plain = generate(&DriftSpec::none(), 20, 1, &cfg).unwrap();
        let flipped = generate(&drift, 20, 1, &cfg).unwrap();
        assert_eq!(plain[..10], flipped[..10]);
        for (p, f) in plain[10..].iter().zip(&flipped[10..]) {
            assert_eq!(p.x, f.x);
            let (p, f) = (p.y["p_1"].unwrap(), f.y["p_1"].unwrap());
            assert!((p + f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradual_drift_ramps() {
        let cfg = SyntheticConfig::default();
        let mut s = SyntheticStream::new(cfg, 2).unwrap();
        s.apply_drift(&DriftSpec {
            kind: DriftKind::GradualMapping,
            onset: 0,
            ramp: 4,
            magnitude: 0.0,
        })
        .unwrap();
        let values: Vec<f64> = (0..6).map(|t| s.mapping.at(t)).collect();
        assert_eq!(values, vec![0.75, 0.5, 0.25, 0.0, 0.0, 0.0]);
        assert!(s
            .apply_drift(&DriftSpec {
                kind: DriftKind::GradualInput,
                onset: 0,
                ramp: 0,
                magnitude: 0.1,
            })
            .is_err());
    }

    #[test]
    fn input_shift_moves_features() {
        let cfg = SyntheticConfig::default();
        let drift = DriftSpec {
            kind: DriftKind::AbruptInput,
            onset: 0,
            ramp: 0,
            magnitude: 0.3,
        };
        let base = generate(&DriftSpec::none(), 300, 3, &cfg).unwrap();
        let moved = generate(&drift, 300, 3, &cfg).unwrap();
        let m = |s: &[RawSample]| s.iter().map(|r| r.x[0].unwrap()).sum::<f64>() / s.len() as f64;
        assert!(m(&moved) > m(&base) + 0.15);
        assert!(mean_target(&moved) > mean_target(&base));
    }

    #[test]
    fn side_samples_do_not_advance() {
        let mut s = SyntheticStream::new(SyntheticConfig::default(), 4).unwrap();
        s.take(5);
        let side = s.side_samples(3, 99);
        assert_eq!(s.position(), 5);
        assert_eq!(side[0].timestamp, s.clone().next_sample().timestamp);
        assert_ne!(side[0].x, s.next_sample().x);
    }
}
