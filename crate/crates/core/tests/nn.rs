mod common;

use common::{fd_gradient, max_rel_error};
use driftline_core::nn::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| {
            Example::new(
                (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..outputs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect()
}

#[test]
fn dense_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Linear] {
        let mut net = DenseNet::from_sizes(&[4, 9, 6, 2], act, Activation::Linear, 17).unwrap();
        let batch = random_batch(&mut rng, 4, 2, 5);
        let (_, analytic) = net.loss_and_gradients(&batch).unwrap();
        let numeric = fd_gradient(&mut net, &batch);
        assert!(max_rel_error(&analytic, &numeric) < 1e-4, "{act:?}");
    }
}

/// Only inputs whose hidden pre-activations all sit well away from the kink
/// at 0 are kept, so the ReLU derivative is defined along every FD probe.
#[test]
fn relu_gradient_matches_finite_differences_off_the_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = DenseNet::from_sizes(&[3, 8, 1], Activation::Relu, Activation::Linear, 23).unwrap();
    let (w, b) = (net.layer_weights(0).to_vec(), net.layer_bias(0).to_vec());
    let clear = |x: &[f64]| {
        (0..8).all(|j| {
            let z: f64 = b[j] + (0..3).map(|i| w[j * 3 + i] * x[i]).sum::<f64>();
            z.abs() > 1e-3
        })
    };
    let batch: Vec<Example> = random_batch(&mut rng, 3, 1, 40)
        .into_iter()
        .filter(|e| clear(&e.input))
        .take(6)
        .collect();
    assert_eq!(batch.len(), 6);
    let (_, analytic) = net.loss_and_gradients(&batch).unwrap();
    assert!(max_rel_error(&analytic, &fd_gradient(&mut net, &batch)) < 1e-4);
}

#[test]
fn views_match_finite_differences() {
    let arch = ArchitectureConfig::default();
    let targets = vec!["a".to_string(), "b".to_string()];
    let mut model = MultiHeadRegressor::with_targets(5, &targets, &arch, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let recon = random_batch(&mut rng, 5, 5, 6)
        .into_iter()
        .map(|e| Example::new(e.input.clone(), e.input))
        .collect::<Vec<_>>();
    let mut view = ReconstructionView { ae: &mut model.shared };
    let (_, a) = view.loss_and_grad(&recon).unwrap();
    assert!(max_rel_error(&a, &fd_gradient(&mut view, &recon)) < 1e-4);

    let heads = random_batch(&mut rng, 5, 1, 6);
    for shared in [false, true] {
        let mut view = HeadView::new(&mut model, "b", shared).unwrap();
        let (_, a) = view.loss_and_grad(&heads).unwrap();
        assert!(max_rel_error(&a, &fd_gradient(&mut view, &heads)) < 1e-4);
    }
}

#[test]
fn head_view_without_shared_leaves_encoder_alone() {
    let arch = ArchitectureConfig::default();
    let mut model = MultiHeadRegressor::with_targets(3, &["y".into()], &arch, 1).unwrap();
    let before = model.shared.encoder.params().to_vec();
    let data: Vec<Example> = (0..20)
        .map(|i| {
            let x = i as f64 / 20.0;
            Example::new(vec![x, 1.0 - x, 0.5], vec![x])
        })
        .collect();
    let mut view = HeadView::new(&mut model, "y", false).unwrap();
    train(&mut view, &data, &TrainConfig::default()).unwrap();
    assert_eq!(model.shared.encoder.params(), &before[..]);
}

#[test]
fn training_reduces_loss_and_is_seeded() {
    let data: Vec<Example> = (0..64)
        .map(|i| {
            let x = i as f64 / 64.0;
            Example::new(vec![x], vec![(3.0 * x).sin()])
        })
        .collect();
    let run = || {
        let mut net = DenseNet::from_sizes(&[1, 8, 1], Activation::Tanh, Activation::Linear, 5).unwrap();
        let before = net.mse(&data).unwrap();
        let cfg = TrainConfig { epochs: 200, learning_rate: 0.01, ..Default::default() };
        let report = train(&mut net, &data, &cfg).unwrap();
        (before, report.final_loss, net.params().to_vec())
    };
    let (before, after, p1) = run();
    assert!(after < before * 0.2);
    let (_, _, p2) = run();
    assert_eq!(p1, p2);
}

#[test]
fn divergence_is_reported() {
    let data = vec![Example::new(vec![1e3], vec![1e3])];
    let mut net = DenseNet::from_sizes(&[1, 1], Activation::Linear, Activation::Linear, 0).unwrap();
    let cfg = TrainConfig { epochs: 50, learning_rate: 1e6, optimizer: OptimizerKind::Sgd, ..Default::default() };
    let err = train(&mut net, &data, &cfg).unwrap_err();
    assert!(matches!(err, driftline_core::Error::Divergence { .. }));
    assert!(net.is_finite());
}

#[test]
fn snapshot_restore_rejects_other_architectures() {
    let arch = ArchitectureConfig::default();
    let a = MultiHeadRegressor::with_targets(3, &["y".into()], &arch, 1).unwrap();
    let mut b = MultiHeadRegressor::with_targets(4, &["y".into()], &arch, 1).unwrap();
    let err = b.restore(&a.snapshot()).unwrap_err();
    assert!(matches!(err, driftline_core::Error::IncompatibleSnapshot(_)));
}

#[test]
fn zero_output_head_predicts_bias_only() {
    let arch = ArchitectureConfig::default();
    let mut model = MultiHeadRegressor::with_targets(3, &[], &arch, 1).unwrap();
    model.add_head("z", &HeadSpec::from_architecture(&arch), HeadInit::ZeroOutputLayer { seed: 2 }).unwrap();
    assert_eq!(model.predict("z", &[0.3, 0.9, 0.1]).unwrap(), 0.0);
    assert!(model.add_head("z", &HeadSpec::from_architecture(&arch), HeadInit::SeededRandom { seed: 2 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshot_bytes_round_trip(seed in any::<u64>(), hidden in 1usize..12, inputs in 1usize..6) {
        let arch = ArchitectureConfig { hidden, latent: 3, head_hidden: hidden, ..Default::default() };
        let model = MultiHeadRegressor::with_targets(inputs, &["p".into(), "q".into()], &arch, seed).unwrap();
        let snap = model.snapshot();
        let back = WeightSnapshot::from_bytes(&snap.to_bytes().unwrap()).unwrap();
        prop_assert!(snap.bitwise_eq(&back));
        let mut other = MultiHeadRegressor::with_targets(inputs, &["p".into(), "q".into()], &arch, seed ^ 1).unwrap();
        other.restore(&back).unwrap();
        let restored: Vec<u64> = other.snapshot().values.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(restored, snap.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_snapshot_bytes_are_rejected(cut in 1usize..40) {
        let net = DenseNet::from_sizes(&[2, 3, 1], Activation::Tanh, Activation::Linear, 0).unwrap();
        let bytes = net.snapshot().to_bytes().unwrap();
        prop_assert!(WeightSnapshot::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }
}
