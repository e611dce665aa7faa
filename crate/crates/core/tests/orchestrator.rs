mod common;

use common::synthetic_instance;
use driftline_core::nn::Snapshot;
use driftline_core::novelty::BlockRole;
use driftline_core::orchestrator::*;
use driftline_core::strategies::*;
use driftline_core::streams::SyntheticStream;
use driftline_core::Error;

fn threshold(block: &str, v: f64) -> HyperparameterEdit {
    HyperparameterEdit { block: block.into(), change: HyperparameterChange::Threshold(v) }
}

/// Every sample is novel for `block` and familiar for every other block.
fn focus(inst: &mut ClearInstance, block: &str) {
    let edits: Vec<_> = inst
        .blocks()
        .iter()
        .map(|b| threshold(&b.id, if b.id == block { 0.0 } else { 1e9 }))
        .collect();
    inst.set_hyperparameters(&edits).unwrap();
}

fn feed(inst: &mut ClearInstance, stream: &mut SyntheticStream, n: usize) {
    for raw in stream.take(n) {
        inst.ingest(&raw).unwrap();
    }
}

fn events<'a>(inst: &'a ClearInstance, kind: &str) -> Vec<&'a LogRecord> {
    inst.log().records().iter().filter(|r| r.event.kind() == kind).collect()
}

fn awaiting(inst: &ClearInstance) -> u64 {
    match inst.mode() {
        Mode::AwaitingDecision { update_id, .. } => *update_id,
        m => panic!("not awaiting a decision: {m:?}"),
    }
}

#[test]
fn trigger_fires_once_and_overflow_goes_pending() {
    let (mut inst, mut stream) = synthetic_instance(1, |_| {});
    focus(&mut inst, AUTOENCODER_BLOCK);
    feed(&mut inst, &mut stream, 40);
    let triggers = events(&inst, "update_triggered");
    assert_eq!(triggers.len(), 1);
    assert_eq!(triggers[0].position, 16);
    let pending = inst
        .log()
        .records()
        .iter()
        .filter(|r| matches!(&r.event, Event::Score { block, destination: Destination::Pending, .. } if block == AUTOENCODER_BLOCK))
        .count();
    assert_eq!(pending, 24);
    assert_eq!(inst.next_triggered(), Some(AUTOENCODER_BLOCK));
    assert_eq!(inst.block(AUTOENCODER_BLOCK).unwrap().novelty.status().pending, 24);
}

#[test]
fn accept_drains_and_promotes_pending() {
    let (mut inst, mut stream) = synthetic_instance(2, |_| {});
    focus(&mut inst, AUTOENCODER_BLOCK);
    feed(&mut inst, &mut stream, 16);
    let before = inst.model().snapshot();
    let result = inst.run_update(AUTOENCODER_BLOCK).unwrap();
    assert_eq!(result.status, UpdateStatus::Proposed);
    // the live model is untouched until a decision lands
    assert!(inst.model().snapshot().bitwise_eq(&before));
    feed(&mut inst, &mut stream, 24);
    assert!(inst.begin_update("p_1").is_err());
    let id = awaiting(&inst);
    let out = inst.apply_decision(Decision::accept(id)).unwrap();
    assert_eq!(out.version, Some(2));
    assert!(!inst.model().snapshot().bitwise_eq(&before));
    let ae = inst.block(AUTOENCODER_BLOCK).unwrap();
    assert_eq!(ae.familiarity.len(), 0);
    let seqs: Vec<u64> = ae.novelty.items().iter().map(|b| b.seq).collect();
    assert_eq!(seqs, (17..=32).collect::<Vec<_>>());
    assert_eq!(ae.novelty.status().pending, 8);
    let emptied = events(&inst, "buffers_emptied");
    let Event::BuffersEmptied { novelty, .. } = &emptied[0].event else { unreachable!() };
    assert_eq!(novelty, &(1..=16).collect::<Vec<_>>());
    // promotion refills the buffer, so the next update is queued at once
    assert_eq!(events(&inst, "update_triggered").len(), 2);
    assert_eq!(inst.next_triggered(), Some(AUTOENCODER_BLOCK));
    assert_eq!(inst.update(id).unwrap().status, UpdateStatus::Accepted);
}

#[test]
fn reject_keeps_weights_bitwise_and_demotes() {
    let (mut inst, mut stream) = synthetic_instance(3, |_| {});
    focus(&mut inst, "p_1");
    let threshold_before = inst.block("p_1").unwrap().threshold;
    feed(&mut inst, &mut stream, 16);
    let familiar_before = inst.block("p_1").unwrap().familiarity.len();
    let before = inst.model().snapshot();
    let version = inst.current_version();
    inst.run_update("p_1").unwrap();
    let id = awaiting(&inst);
    let out = inst.apply_decision(Decision::reject(id)).unwrap();
    assert_eq!(out.version, None);
    assert!(inst.model().snapshot().bitwise_eq(&before));
    assert_eq!(inst.current_version(), version);
    let b = inst.block("p_1").unwrap();
    assert_eq!(b.threshold, threshold_before);
    assert!(b.novelty.is_empty());
    assert_eq!(b.familiarity.len(), familiar_before + 16);
    assert_eq!(events(&inst, "samples_demoted").len(), 1);
    assert!(matches!(inst.apply_decision(Decision::reject(id)), Err(Error::Conflict(_))));
}

#[test]
fn rollback_restores_weights_scaler_and_thresholds() {
    let (mut inst, mut stream) = synthetic_instance(4, |_| {});
    let v1 = inst.versions().get(1).unwrap().clone();
    focus(&mut inst, AUTOENCODER_BLOCK);
    feed(&mut inst, &mut stream, 16);
    inst.run_update(AUTOENCODER_BLOCK).unwrap();
    assert!(matches!(inst.apply_decision(Decision::rollback(1)), Err(Error::Conflict(_))));
    let id = awaiting(&inst);
    inst.apply_decision(Decision::accept(id)).unwrap();
    assert!(matches!(inst.apply_decision(Decision::rollback(99)), Err(Error::NotFound(_))));
    let out = inst.apply_decision(Decision::rollback(1)).unwrap();
    assert_eq!(out.version, Some(3));
    assert!(inst.model().snapshot().bitwise_eq(&v1.snapshot));
    assert_eq!(inst.preprocessor().scaler(), &v1.scaler);
    assert_eq!(inst.preprocessor().version(), v1.scaler_version);
    for b in inst.blocks() {
        assert_eq!(b.threshold, v1.thresholds[&b.id]);
    }
    let entry = inst.versions().get(3).unwrap();
    assert_eq!(entry.parent, Some(2));
    assert_eq!(entry.reason, VersionReason::RolledBack { to: 1 });
    assert_eq!(events(&inst, "rolled_back").len(), 1);
}

#[test]
fn rollback_to_incompatible_version_conflicts() {
    let (mut inst, _) = synthetic_instance(5, |_| {});
    inst.add_target("p_2", None, None, &[]).unwrap();
    let mut other = inst.clone();
    // v1 has no p_2 head, the current model has one
    assert!(matches!(other.apply_decision(Decision::rollback(1)), Err(Error::Conflict(_))));
    assert!(inst.apply_decision(Decision::rollback(2)).is_ok());
}

#[test]
fn decision_errors() {
    let (mut inst, _) = synthetic_instance(6, |_| {});
    assert!(matches!(inst.apply_decision(Decision::accept(7)), Err(Error::NotFound(_))));
    let no_id = Decision { update_id: None, ..Decision::accept(1) };
    assert!(matches!(inst.apply_decision(no_id), Err(Error::Validation(_))));
}

#[test]
fn add_target_rules() {
    let (mut inst, mut stream) = synthetic_instance(7, |c| c.max_heads = 2);
    assert!(matches!(inst.add_target("p_1", None, None, &[]), Err(Error::Conflict(_))));
    assert!(matches!(inst.add_target(AUTOENCODER_BLOCK, None, None, &[]), Err(Error::Validation(_))));
    feed(&mut inst, &mut stream, 500);
    let v = inst.add_target("p_2", None, None, &[]).unwrap();
    assert_eq!(inst.current_version(), v);
    let added = events(&inst, "target_added");
    assert_eq!(added[0].position, 501);
    let Event::TargetAdded { warmup_samples, threshold, .. } = &added[0].event else { unreachable!() };
    assert_eq!(*warmup_samples, 0);
    assert_eq!(*threshold, inst.config().initial_threshold);
    let probe = stream.take(5);
    for raw in &probe {
        let x: Vec<f64> = raw.x.iter().map(|v| v.unwrap()).collect();
        let x = inst.preprocessor().rescale(&x).unwrap();
        assert_eq!(inst.model().predict("p_2", &x).unwrap(), 0.0);
    }
    assert!(matches!(inst.add_target("p_3", None, None, &[]), Err(Error::Validation(_))));
    assert!(inst.block("p_2").unwrap().role == BlockRole::Predictor { target: "p_2".into() });
}

#[test]
fn hyperparameter_edits() {
    let (mut inst, mut stream) = synthetic_instance(8, |_| {});
    inst.set_hyperparameters(&[threshold("p_1", 0.05)]).unwrap();
    assert_eq!(inst.block("p_1").unwrap().threshold.value, 0.05);
    let hp = events(&inst, "hyperparameter");
    let Event::Hyperparameter { field, new, .. } = &hp[0].event else { unreachable!() };
    assert_eq!(field, "threshold");
    assert_eq!(new, &serde_json::json!(0.05));

    let log_len = inst.log().last_seq();
    let bad = [
        threshold("p_1", 0.2),
        HyperparameterEdit {
            block: "p_1".into(),
            change: HyperparameterChange::Strategy(StrategySpec::new(StrategyKind::Ewc { lambda: -1.0 })),
        },
    ];
    assert!(matches!(inst.set_hyperparameters(&bad), Err(Error::Validation(_))));
    assert_eq!(inst.block("p_1").unwrap().threshold.value, 0.05);
    assert_eq!(inst.log().last_seq(), log_len);
    assert!(matches!(inst.set_hyperparameters(&[threshold("nope", 0.1)]), Err(Error::NotFound(_))));
    let iso = HyperparameterEdit {
        block: AUTOENCODER_BLOCK.into(),
        change: HyperparameterChange::Strategy(StrategySpec::new(StrategyKind::Isolation { freeze_shared: true })),
    };
    assert!(inst.set_hyperparameters(&[iso]).is_err());

    focus(&mut inst, AUTOENCODER_BLOCK);
    feed(&mut inst, &mut stream, 10);
    let shrink = HyperparameterEdit { block: AUTOENCODER_BLOCK.into(), change: HyperparameterChange::NoveltyCapacity(4) };
    inst.set_hyperparameters(std::slice::from_ref(&shrink)).unwrap();
    let ae = inst.block(AUTOENCODER_BLOCK).unwrap();
    assert_eq!(ae.novelty.len(), 4);
    assert_eq!(ae.novelty.status().pending, 6);
    assert_eq!(events(&inst, "update_triggered").len(), 1);
    inst.run_update(AUTOENCODER_BLOCK).unwrap();
    assert!(matches!(inst.set_hyperparameters(&[shrink]), Err(Error::Conflict(_))));
}

#[test]
fn auto_policy_rules() {
    let (mut inst, mut stream) = synthetic_instance(9, |_| {});
    focus(&mut inst, "p_1");
    feed(&mut inst, &mut stream, 16);
    let base = inst.run_update("p_1").unwrap();
    let policy = AutoPolicy { enabled: true, max_forgetting: 0.1 };
    let with = |nb: f64, na: f64, f: Option<f64>| {
        let mut r = base.clone();
        r.errors.novel_before = nb;
        r.errors.novel_after = na;
        r.forgetting_ratio = f;
        policy.decide(&r)
    };
    assert_eq!(with(0.5, 0.1, Some(0.05)), Verdict::Accept);
    assert_eq!(with(0.5, 0.1, Some(0.1)), Verdict::Accept);
    assert_eq!(with(0.5, 0.1, Some(0.11)), Verdict::Reject);
    assert_eq!(with(0.5, 0.5, Some(0.0)), Verdict::Reject);
    assert_eq!(with(0.5, 0.1, None), Verdict::Reject);
    assert_eq!(with(0.5, 0.1, Some(-3.0)), Verdict::Accept);
}

#[test]
fn auto_policy_decides_without_operator() {
    let (mut inst, mut stream) = synthetic_instance(10, |c| {
        c.auto_policy = AutoPolicy { enabled: true, max_forgetting: 1e9 };
    });
    focus(&mut inst, "p_1");
    feed(&mut inst, &mut stream, 16);
    let r = inst.process_triggers().unwrap();
    assert_eq!(inst.mode(), &Mode::Running);
    assert_ne!(r[0].status, UpdateStatus::Proposed);
    let applied = events(&inst, "decision_applied");
    let Event::DecisionApplied { issued_by, .. } = &applied[0].event else { unreachable!() };
    assert_eq!(*issued_by, DecisionSource::AutoPolicy);
}

#[test]
fn failed_update_is_rejected_and_logged() {
    let (mut inst, mut stream) = synthetic_instance(11, |c| {
        c.predictor_strategy = StrategySpec::new(StrategyKind::ewc());
    });
    focus(&mut inst, "p_1");
    feed(&mut inst, &mut stream, 16);
    let r = inst.run_update("p_1").unwrap();
    assert_eq!(r.status, UpdateStatus::Rejected);
    assert_eq!(inst.mode(), &Mode::Running);
    assert_eq!(events(&inst, "update_failed").len(), 1);
    assert_eq!(inst.block("p_1").unwrap().familiarity.len(), 16);
}

#[test]
fn upstream_first_ordering() {
    for upstream in [true, false] {
        let (mut inst, mut stream) = synthetic_instance(12, |c| c.upstream_first = upstream);
        inst.set_hyperparameters(&[
            threshold(AUTOENCODER_BLOCK, 0.0),
            threshold("p_1", 0.0),
            HyperparameterEdit { block: "p_1".into(), change: HyperparameterChange::NoveltyCapacity(8) },
        ])
        .unwrap();
        feed(&mut inst, &mut stream, 16);
        let expect = if upstream { AUTOENCODER_BLOCK } else { "p_1" };
        assert_eq!(inst.next_triggered(), Some(expect));
    }
}

#[test]
fn ingest_validates_width_and_positions() {
    let (mut inst, mut stream) = synthetic_instance(13, |_| {});
    let mut raw = stream.next_sample();
    raw.x.pop();
    assert!(matches!(inst.ingest(&raw), Err(Error::Ingest(_))));
    assert_eq!(inst.position(), 0);
    let recs = inst.ingest(&stream.next_sample()).unwrap();
    assert!(recs.iter().all(|r| r.position == 1));
    assert!(recs.iter().any(|r| matches!(r.event, Event::Prediction { seq: 1, .. })));
    let state = inst.state();
    assert_eq!(state.position, 1);
    assert_eq!(state.last_event, inst.log().last_seq());
    assert_eq!(state.blocks.len(), 2);
}

#[test]
fn clones_replay_identically() {
    let (mut a, mut stream) = synthetic_instance(14, |c| c.auto_policy.enabled = true);
    let mut b = a.clone();
    focus(&mut a, "p_1");
    focus(&mut b, "p_1");
    for raw in stream.take(60) {
        a.ingest(&raw).unwrap();
        a.process_triggers().unwrap();
        b.ingest(&raw).unwrap();
        b.process_triggers().unwrap();
    }
    assert!(a.model().snapshot().bitwise_eq(&b.model().snapshot()));
    assert_eq!(strip_wall_clock(a.log().records()), strip_wall_clock(b.log().records()));
    assert!(a.updates().count() >= 2);
}

#[test]
fn huge_ewc_penalty_limits_forgetting() {
    let (inst, mut stream) = synthetic_instance(15, |_| {});
    let mut pre = inst.preprocessor().clone();
    let mut proc = |n| -> Vec<driftline_core::Sample> {
        stream.take(n).iter().map(|r| pre.process(r).unwrap().unwrap().sample).collect()
    };
    let familiar = proc(200);
    let retained = proc(100);
    let novel: Vec<_> = proc(64)
        .into_iter()
        .map(|mut s| {
            let y = s.y.get_mut("p_1").unwrap();
            *y = 1.0 - *y;
            s
        })
        .collect();
    let role = BlockRole::Predictor { target: "p_1".into() };
    let spec = StrategySpec::new(StrategyKind::Ewc { lambda: 1e9 });
    let mut model = inst.model().clone();
    let out = update_block(&mut model, &role, "p_1", &spec, &novel, &familiar, &retained, 3).unwrap();
    let ratio = out.result.forgetting_ratio.unwrap();
    assert!(ratio.abs() <= 0.05, "forgetting ratio {ratio}");
}

#[test]
fn snapshots_and_novelty_export() {
    let (mut inst, mut stream) = synthetic_instance(16, |_| {});
    focus(&mut inst, AUTOENCODER_BLOCK);
    feed(&mut inst, &mut stream, 5);
    let mut csv = Vec::new();
    inst.export_novelty_csv(AUTOENCODER_BLOCK, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("seq,timestamp,x0,"));
    assert_eq!(text.lines().count(), 6);

    let dir = tempfile::tempdir().unwrap();
    inst.write_snapshots(dir.path()).unwrap();
    let store = VersionStore::read_dir(dir.path()).unwrap();
    assert!(store.get(1).unwrap().snapshot.bitwise_eq(&inst.versions().get(1).unwrap().snapshot));
    assert!(dir.path().join("blocks.json").exists());
}

#[test]
fn config_validation() {
    let ok = InstanceConfig { features: vec!["a".into()], targets: vec!["y".into()], ..Default::default() };
    assert!(ok.validate().is_ok());
    let cases = [
        InstanceConfig { features: vec![], ..ok.clone() },
        InstanceConfig { targets: vec!["y".into(), "y".into()], ..ok.clone() },
        InstanceConfig { novelty_capacity: 0, ..ok.clone() },
        InstanceConfig { max_heads: 0, ..ok.clone() },
        InstanceConfig { compute_budget_seconds: 0.0, ..ok.clone() },
    ];
    for c in cases {
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
    }
}
