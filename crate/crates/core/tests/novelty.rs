mod common;

use common::{loop_batch_score, sort_quantile};
use driftline_core::nn::{ArchitectureConfig, MultiHeadRegressor};
use driftline_core::novelty::*;
use driftline_core::Sample;
use proptest::prelude::*;

proptest! {
    #[test]
    fn quantile_matches_sort(values in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.0f64..=1.0) {
        let fast = quantile(&values, q).unwrap();
        prop_assert!((fast - sort_quantile(&values, q)).abs() <= 1e-9 * fast.abs().max(1.0));
    }

    #[test]
    fn adjusted_threshold_is_scaled_quantile(scores in prop::collection::vec(0.0f64..10.0, 1..100), alpha in 0.1f64..3.0) {
        let t = Threshold::new(0.5, Adaptation::Quantile { q: 0.95, alpha }).unwrap();
        let a = t.adjusted(&scores).unwrap();
        prop_assert!((a.value - alpha * sort_quantile(&scores, 0.95)).abs() < 1e-9);
        prop_assert_eq!(a.adaptation, t.adaptation);
    }

    #[test]
    fn buffer_fills_once_and_promotes_in_order(capacity in 1usize..20, pushes in 0usize..80) {
        let mut buf = NoveltyBuffer::new(capacity).unwrap();
        let mut became_full = 0;
        for i in 0..pushes {
            let was = buf.is_full();
            let status = buf.push(i);
            prop_assert!(status.fill <= capacity);
            if !was && status.is_full {
                became_full += 1;
            }
        }
        prop_assert_eq!(became_full, usize::from(pushes >= capacity));
        let drained = buf.drain();
        prop_assert_eq!(drained, (0..pushes.min(capacity)).collect::<Vec<_>>());
        let promoted: Vec<usize> = buf.items().to_vec();
        let expect: Vec<usize> = (capacity..pushes).take(capacity).collect();
        prop_assert_eq!(promoted, expect);
    }

    #[test]
    fn familiarity_cap_evicts_oldest(cap in 1usize..10, pushes in 0usize..40) {
        let mut buf = FamiliarityBuffer::new(Some(cap));
        let mut evicted = Vec::new();
        for i in 0..pushes {
            evicted.extend(buf.push(i).1);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        prop_assert_eq!(evicted, (0..pushes.saturating_sub(cap)).collect::<Vec<_>>());
    }
}

#[test]
fn classify_tie_is_familiar() {
    let t = Threshold::new(0.2, Adaptation::Fixed).unwrap();
    assert_eq!(t.classify(0.2).unwrap(), Classification::Familiar);
    assert_eq!(t.classify(0.2000001).unwrap(), Classification::Novel);
    assert!(t.classify(-1.0).is_err());
    assert!(t.adjusted(&[1.0]).is_none());
    assert!(Threshold::new(-0.1, Adaptation::Fixed).is_err());
}

#[test]
fn batch_score_matches_loop() {
    let model = MultiHeadRegressor::with_targets(3, &["y".into()], &ArchitectureConfig::default(), 4).unwrap();
    let samples: Vec<Sample> = (0..25)
        .map(|i| {
            let v = i as f64 / 25.0;
            Sample {
                timestamp: Default::default(),
                x: vec![v, 1.0 - v, (v * 7.0).sin()],
                y: [("y".to_string(), v * v)].into(),
            }
        })
        .collect();
    for role in [BlockRole::Autoencoder, BlockRole::Predictor { target: "y".into() }] {
        let fast = batch_score(&model, &role, &samples).unwrap();
        assert!((fast - loop_batch_score(&model, &role, &samples)).abs() < 1e-12);
    }
    let unlabeled = Sample { y: Default::default(), ..samples[0].clone() };
    assert!(score(&model, &BlockRole::Predictor { target: "y".into() }, &unlabeled).is_err());
}

#[test]
fn reservoir_is_seeded_and_bounded() {
    let fill = |seed| {
        let mut r = Reservoir::new(10, seed);
        for i in 0..1000 {
            r.offer(i);
        }
        r.items().to_vec()
    };
    assert_eq!(fill(1), fill(1));
    assert_ne!(fill(1), fill(2));
    assert_eq!(fill(1).len(), 10);
}
