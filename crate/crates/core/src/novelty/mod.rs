//! Novelty detection: per-block scoring, threshold classification, and the
//! novelty/familiarity buffers that collect evidence for the next update.

mod buffer;
mod threshold;

pub use buffer::{BufferStatus, FamiliarityBuffer, NoveltyBuffer};
pub use threshold::{classify, quantile, Adaptation, Classification, Threshold};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mse, MultiHeadRegressor};
use crate::sample::Sample;

/// What a block models: the shared reconstruction or one target's prediction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockRole {
    Autoencoder,
    Predictor { target: String },
}

impl BlockRole {
    pub fn target(&self) -> Option<&str> {
        match self {
            BlockRole::Autoencoder => None,
            BlockRole::Predictor { target } => Some(target),
        }
    }
}

/// Scores a sample against one block of a model.
pub trait NoveltyDetector {
    fn score(&self, model: &MultiHeadRegressor, role: &BlockRole, sample: &Sample) -> Result<f64>;
}

/// Deterministic detector: mean squared error between output and truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct MseDetector;

impl NoveltyDetector for MseDetector {
    fn score(&self, model: &MultiHeadRegressor, role: &BlockRole, sample: &Sample) -> Result<f64> {
        score(model, role, sample)
    }
}

/// Reconstruction MSE for the autoencoder block, squared prediction error for a predictor.
pub fn score(model: &MultiHeadRegressor, role: &BlockRole, sample: &Sample) -> Result<f64> {
    match role {
        BlockRole::Autoencoder => mse(&model.reconstruct(&sample.x)?, &sample.x),
        BlockRole::Predictor { target } => {
            let truth = sample.target(target).ok_or_else(|| Error::MissingTarget {
                block: target.clone(),
                target: target.clone(),
            })?;
            let prediction = model.predict(target, &sample.x)?;
            Ok((prediction - truth) * (prediction - truth))
        }
    }
}

/// Mean per-sample score over a batch.
pub fn batch_score(model: &MultiHeadRegressor, role: &BlockRole, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("score of an empty batch"));
    }
    let mut total = 0.0;
    for s in samples {
        total += score(model, role, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// A sample held in a block buffer, tagged with its stream sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedSample {
    pub seq: u64,
    pub sample: Sample,
    pub raw_x: Vec<f64>,
    pub score: f64,
}

/// Writes buffer contents as CSV: `seq,timestamp,x0..xn,target,score`.
pub fn export_buffer_csv<'a, W: Write>(
    writer: W,
    items: impl IntoIterator<Item = &'a BufferedSample>,
    target: Option<&str>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header_written = false;
    for item in items {
        if !header_written {
            let mut header = vec!["seq".to_string(), "timestamp".to_string()];
            header.extend((0..item.sample.x.len()).map(|j| format!("x{j}")));
            header.push("target".into());
            header.push("score".into());
            out.write_record(&header)?;
            header_written = true;
        }
        let mut row = vec![item.seq.to_string(), item.sample.timestamp.to_rfc3339()];
        row.extend(item.sample.x.iter().map(|v| v.to_string()));
        row.push(
            target
                .and_then(|t| item.sample.target(t))
                .map(|v| v.to_string())
                .unwrap_or_default(),
        );
        row.push(item.score.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Seeded uniform reservoir sample (algorithm R) over a stream.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    seen: u64,
    items: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T: Clone> Reservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            seen: 0,
            items: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn offer(&mut self, item: T) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else if self.capacity > 0 {
            let j = self.rng.gen_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn items_mut(&mut self) -> &mut [T] {
        &mut self.items
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchitectureConfig, Autoencoder, DenseNet, LayerSpec, Activation};
    use chrono::Utc;

    fn identity_model() -> MultiHeadRegressor {
        let id = |n: usize| {
            let mut p = vec![0.0; n * n + n];
            for i in 0..n {
                p[i * n + i] = 1.0;
            }
            DenseNet::from_parts(vec![LayerSpec::new(n, n, Activation::Linear)], p, 0).unwrap()
        };
        MultiHeadRegressor::new(Autoencoder::from_parts(id(2), id(2)).unwrap())
    }

    fn sample(x: Vec<f64>) -> Sample {
        Sample {
            timestamp: Utc::now(),
            x,
            y: Default::default(),
        }
    }

    #[test]
    fn perfect_reconstruction_scores_zero() {
        let m = identity_model();
        assert_eq!(score(&m, &BlockRole::Autoencoder, &sample(vec![0.3, 0.9])).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_reconstruction_error() {
        // decoder maps everything to [1, 1]
        let enc = DenseNet::zeros(vec![LayerSpec::new(2, 2, Activation::Linear)]).unwrap();
        let mut dp = vec![0.0; 6];
        dp[4] = 1.0;
        dp[5] = 1.0;
        let dec = DenseNet::from_parts(vec![LayerSpec::new(2, 2, Activation::Linear)], dp, 0).unwrap();
        let m = MultiHeadRegressor::new(Autoencoder::from_parts(enc, dec).unwrap());
        assert_eq!(score(&m, &BlockRole::Autoencoder, &sample(vec![0.0, 1.0])).unwrap(), 0.5);
    }

    #[test]
    fn predictor_needs_target() {
        let targets = vec!["p".to_string()];
        let m = MultiHeadRegressor::with_targets(3, &targets, &ArchitectureConfig::default(), 1)
            .unwrap();
        let role = BlockRole::Predictor { target: "p".into() };
        assert!(matches!(
            score(&m, &role, &sample(vec![0.1, 0.2, 0.3])),
            Err(Error::MissingTarget { .. })
        ));
        let mut s = sample(vec![0.1, 0.2, 0.3]);
        s.y.insert("p".into(), 0.5);
        let expected = (m.predict("p", &s.x).unwrap() - 0.5).powi(2);
        assert_eq!(score(&m, &role, &s).unwrap(), expected);
    }

    #[test]
    fn batch_score_is_mean_of_sample_scores() {
        let targets = vec!["p".to_string()];
        let m = MultiHeadRegressor::with_targets(3, &targets, &ArchitectureConfig::default(), 1)
            .unwrap();
        let batch: Vec<Sample> = (0..10)
            .map(|i| sample(vec![i as f64 / 10.0, 0.5, 1.0 - i as f64 / 10.0]))
            .collect();
        let mean: f64 = batch
            .iter()
            .map(|s| score(&m, &BlockRole::Autoencoder, s).unwrap())
            .sum::<f64>()
            / 10.0;
        let b = batch_score(&m, &BlockRole::Autoencoder, &batch).unwrap();
        assert!((b - mean).abs() < 1e-12);
    }

    #[test]
    fn reservoir_is_seeded_and_bounded() {
        let run = |seed| {
            let mut r = Reservoir::new(10, seed);
            for i in 0..1000 {
                r.offer(i);
            }
            r.items().to_vec()
        };
        assert_eq!(run(3), run(3));
        assert_eq!(run(3).len(), 10);
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let mut s = sample(vec![0.1, 0.2]);
        s.y.insert("p".into(), 0.4);
        let item = BufferedSample {
            seq: 7,
            sample: s,
            raw_x: vec![0.1, 0.2],
            score: 0.25,
        };
        let mut out = Vec::new();
        export_buffer_csv(&mut out, [&item], Some("p")).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "seq,timestamp,x0,x1,target,score");
        assert!(lines[1].starts_with("7,"));
        assert!(lines[1].ends_with(",0.1,0.2,0.4,0.25"));
    }
}
