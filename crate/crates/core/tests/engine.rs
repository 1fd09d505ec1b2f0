use std::collections::BTreeSet;

use classdisc_core::{
    evaluate_state, load_data, run_class_count_experiment, run_dynamic, run_static, ExperimentConfig, OodMode,
};

/// Six well-separated Gaussian classes in 8 dimensions; 4 and 5 held out.
fn config(seed: u64) -> ExperimentConfig {
    let text = serde_json::json!({
        "data": {"source": "synthetic", "n_classes": 6, "dim": 8, "separation": 8.0, "per_class_n": 80, "seed": seed},
        "split": {"held_out_classes": [4, 5], "seed": seed},
        "net": {"hidden_dims": [32]},
        "adam": {"seed": seed, "batch_size": 32},
        "kmeans": {"k": 4, "restarts": 3, "seed": seed},
        "epochs_initial": 5,
        "epochs_per_round": 2,
        "seed": seed,
    });
    ExperimentConfig::from_json(&text.to_string()).unwrap()
}

#[test]
fn static_discovery_on_separable_data() {
    let cfg = config(1);
    let data = load_data(&cfg.data).unwrap();
    let (state, report) = run_static(&cfg, &data).unwrap();
    assert!(report.dra >= 0.95, "static DRA {}", report.dra);
    assert_eq!(state.history.len(), 1);
    assert_eq!(state.history[0].dra, report.dra);
    assert!(state.pool.is_empty());
    let members: usize = state.accepted.iter().map(|a| a.size).sum();
    assert_eq!(members, 160);
}

#[test]
fn dynamic_discovery_invariants() {
    let cfg = config(2);
    let data = load_data(&cfg.data).unwrap();
    let (_, static_report) = run_static(&cfg, &data).unwrap();
    let (state, reports) = run_dynamic(&cfg, &data).unwrap();

    assert_eq!(reports[0], static_report);
    assert!(state.early_stop.is_none(), "{:?}", state.early_stop);
    assert_eq!(state.history.len(), cfg.rounds() + 1);
    assert_eq!(reports.len(), state.history.len());
    assert_eq!(evaluate_state(&state, &cfg).unwrap(), state.history.last().unwrap().report);
    assert_eq!(evaluate_state(&state, &cfg).unwrap(), evaluate_state(&state, &cfg).unwrap());

    let mut seen = BTreeSet::new();
    for a in &state.accepted {
        assert!(a.purity >= 0.9, "round {} purity {}", a.round, a.purity);
        for &m in &a.members {
            assert!(seen.insert(m), "sample {m} accepted twice");
            assert!(!state.pool.contains(&m));
        }
    }
    for (r, rec) in state.history.iter().enumerate() {
        assert_eq!(rec.round as usize, r);
        assert_eq!(rec.candidates.iter().filter(|c| c.accepted).count(), usize::from(r > 0));
    }
}

#[test]
fn detector_routing_covers_every_incoming_sample() {
    let mut cfg = config(3);
    cfg.ood_mode = OodMode::Detector { quantile: 0.95 };
    let data = load_data(&cfg.data).unwrap();
    let (state, _) = run_dynamic(&cfg, &data).unwrap();
    let d = state.detector.expect("detector was calibrated");
    assert!(d.threshold > 0.0 && d.threshold <= 1.0);
    let first = &state.history[0];
    assert_eq!(state.routed.len() + first.ood_pool_size, 160);
}

#[test]
fn bad_configs_are_rejected() {
    let data = load_data(&config(0).data).unwrap();
    let mut cfg = config(0);
    cfg.kmeans.k = 0;
    assert!(cfg.validate().is_err());

    let mut cfg = config(0);
    cfg.rounds = Some(3);
    assert!(cfg.validate().is_err());

    let mut cfg = config(0);
    cfg.split.held_out_classes = vec![9];
    assert!(cfg.validate_with_data(&data).is_err());

    let mut cfg = config(0);
    cfg.split.held_out_classes = vec![0, 1, 2, 3, 4];
    assert!(cfg.validate_with_data(&data).is_err());

    let mut cfg = config(0);
    cfg.kmeans.k = 161;
    assert!(cfg.validate_with_data(&data).is_err());

    let mut cfg = config(0);
    cfg.ood_mode = OodMode::Detector { quantile: 1.5 };
    assert!(cfg.validate().is_err());

    let e = ExperimentConfig::from_json(r#"{"data": {"source": "synthetic"}, "split": {}, "bogus": 1}"#).unwrap_err();
    assert!(e.is_input_error());
    config(0).validate_with_data(&data).unwrap();
}

#[test]
fn config_json_round_trips() {
    let cfg = config(4);
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn class_count_rows() {
    let cfg = config(5);
    let data = load_data(&cfg.data).unwrap();
    let rows = run_class_count_experiment(&cfg, &data, &[2, 4], &[4, 5]).unwrap();
    assert_eq!(rows.iter().map(|r| r.class_count).collect::<Vec<_>>(), [2, 4]);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.cluster_accuracy));
        assert!(r.dra >= r.cluster_accuracy && r.dra <= 1.0);
    }
    assert!(run_class_count_experiment(&cfg, &data, &[5], &[4, 5]).is_err());
    assert!(run_class_count_experiment(&cfg, &data, &[2], &[]).is_err());
    assert!(run_class_count_experiment(&cfg, &data, &[2], &[7]).is_err());
}
