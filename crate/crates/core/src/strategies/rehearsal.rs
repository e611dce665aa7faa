use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{BatchSource, Example};

#[derive(Debug, Clone, PartialEq)]
pub struct RehearsalBatch {
    pub examples: Vec<Example>,
    pub novel_count: usize,
    pub familiar_count: usize,
    /// Set when no familiar samples were available and the batch is all novel.
    pub fell_back_to_novel: bool,
}

pub(crate) fn novel_share(mix_ratio: f64, batch_size: usize) -> usize {
    ((mix_ratio * batch_size as f64).ceil() as usize).min(batch_size)
}

/// `ceil(mix_ratio * batch_size)` novel samples plus familiar samples drawn
/// uniformly with replacement, shuffled. With no familiar samples the batch
/// is filled with novel ones instead.
pub fn compose_rehearsal_batch(
    novel: &[Example],
    familiar: &[Example],
    mix_ratio: f64,
    batch_size: usize,
    seed: u64,
) -> RehearsalBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..novel.len()).collect();
    order.shuffle(&mut rng);
    let wanted = if familiar.is_empty() {
        batch_size
    } else {
        novel_share(mix_ratio, batch_size)
    };
    // cycles when fewer novel samples exist than the batch asks for
    let chosen: Vec<&Example> = order.iter().cycle().take(wanted).map(|&i| &novel[i]).collect();
    compose(&chosen, familiar, batch_size, &mut rng)
}

fn compose(
    novel_chunk: &[&Example],
    familiar: &[Example],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> RehearsalBatch {
    let mut examples: Vec<Example> = novel_chunk.iter().map(|e| (*e).clone()).collect();
    let fell_back = familiar.is_empty();
    let familiar_count = if fell_back {
        0
    } else {
        batch_size.saturating_sub(novel_chunk.len())
    };
    for _ in 0..familiar_count {
        examples.push(familiar[rng.gen_range(0..familiar.len())].clone());
    }
    examples.shuffle(rng);
    RehearsalBatch {
        novel_count: novel_chunk.len(),
        familiar_count,
        examples,
        fell_back_to_novel: fell_back,
    }
}

/// Each epoch visits every novel sample once, mixing each chunk with
/// freshly drawn familiar samples.
pub(crate) struct RehearsalBatches<'a> {
    pub novel: &'a [Example],
    pub familiar: &'a [Example],
    pub mix_ratio: f64,
    pub batch_size: usize,
}

impl BatchSource for RehearsalBatches<'_> {
    fn epoch_batches(&mut self, rng: &mut ChaCha8Rng) -> Vec<Vec<Example>> {
        let per_batch = if self.familiar.is_empty() {
            self.batch_size
        } else {
            novel_share(self.mix_ratio, self.batch_size)
        };
        let mut order: Vec<usize> = (0..self.novel.len()).collect();
        order.shuffle(rng);
        if per_batch == 0 {
            // pure replay: as many familiar-only batches as the novel data would fill
            let steps = self.novel.len().div_ceil(self.batch_size);
            return (0..steps)
                .map(|_| compose(&[], self.familiar, self.batch_size, rng).examples)
                .collect();
        }
        order
            .chunks(per_batch)
            .map(|chunk| {
                let chunk: Vec<&Example> = chunk.iter().map(|&i| &self.novel[i]).collect();
                let fill = self.batch_size.max(chunk.len());
                compose(&chunk, self.familiar, fill, rng).examples
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(tag: f64, n: usize) -> Vec<Example> {
        (0..n).map(|i| Example::new(vec![tag, i as f64], vec![tag])).collect()
    }

    #[test]
    fn half_and_half() {
        let b = compose_rehearsal_batch(&examples(1.0, 20), &examples(0.0, 50), 0.5, 10, 3);
        assert_eq!(b.examples.len(), 10);
        assert_eq!(b.novel_count, 5);
        assert_eq!(b.examples.iter().filter(|e| e.target[0] == 1.0).count(), 5);
        assert!(!b.fell_back_to_novel);
    }

    #[test]
    fn rounds_novel_share_up() {
        let b = compose_rehearsal_batch(&examples(1.0, 20), &examples(0.0, 50), 0.25, 10, 3);
        assert_eq!(b.novel_count, 3);
        assert_eq!(b.familiar_count, 7);
    }

    #[test]
    fn empty_familiar_falls_back() {
        let b = compose_rehearsal_batch(&examples(1.0, 20), &[], 0.5, 10, 3);
        assert!(b.fell_back_to_novel);
        assert!(b.examples.iter().all(|e| e.target[0] == 1.0));
        assert_eq!(b.examples.len(), 10);
    }

    #[test]
    fn pure_novel_at_ratio_one() {
        let b = compose_rehearsal_batch(&examples(1.0, 20), &examples(0.0, 50), 1.0, 10, 3);
        assert_eq!(b.novel_count, 10);
        assert_eq!(b.familiar_count, 0);
    }

    #[test]
    fn seeded_reproducible() {
        let n = examples(1.0, 20);
        let f = examples(0.0, 50);
        assert_eq!(
            compose_rehearsal_batch(&n, &f, 0.5, 10, 9),
            compose_rehearsal_batch(&n, &f, 0.5, 10, 9)
        );
    }

    #[test]
    fn epoch_covers_every_novel_sample() {
        let n = examples(1.0, 23);
        let f = examples(0.0, 5);
        let mut src = RehearsalBatches {
            novel: &n,
            familiar: &f,
            mix_ratio: 0.5,
            batch_size: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = src.epoch_batches(&mut rng);
        assert_eq!(batches.len(), 6);
        let mut seen: Vec<f64> = batches
            .iter()
            .flatten()
            .filter(|e| e.target[0] == 1.0)
            .map(|e| e.input[1])
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..23).map(|i| i as f64).collect::<Vec<_>>());
    }
}
