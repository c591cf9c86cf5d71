use iocnn::constraints::ConstraintPolicy;
use iocnn::data::{gen_disk_ring, gen_vshape};
use iocnn::ensemble::{
    boost_fit, ensemble_predict, load_ensemble, moe_em_fit, oracle_accuracy, save_ensemble, Ensemble, EnsembleMode,
    MoeConfig,
};
use iocnn::metrics::accuracy;
use iocnn::net::{predict_from_logits, ActivationKind, FinalMap, ModelSpec, Network};
use iocnn::train::TrainConfig;
use iocnn::verify::{jensen_check, BoxSampler};

fn expert_spec() -> ModelSpec {
    ModelSpec::mlp(2, &[8], 2, ActivationKind::Elu, false, FinalMap::Softmax)
}

fn gate_spec(p: usize) -> ModelSpec {
    ModelSpec::mlp(2, &[8], p, ActivationKind::Elu, false, FinalMap::Softmax)
}

fn experts(p: usize) -> Vec<Network<f64>> {
    (0..p)
        .map(|k| Network::new_convex(expert_spec(), k as u64, ConstraintPolicy::strict()).unwrap())
        .collect()
}

#[test]
fn single_expert_ensemble_is_the_expert() {
    let data = gen_disk_ring(100, 1).to_batch::<f64>();
    let e = experts(1);
    let ens = Ensemble::new(EnsembleMode::MoeEm, e.clone(), None).unwrap();
    let (pred, w) = ensemble_predict(&ens, data.inputs(), None).unwrap();
    assert_eq!(pred, predict_from_logits(e[0].logits(data.inputs()).unwrap().view()));
    assert!(w.iter().all(|&v| v == 1.0));
    assert_eq!(
        oracle_accuracy(&e, data.inputs(), &data.labels).unwrap(),
        accuracy(&pred, &data.labels).unwrap()
    );
}

#[test]
fn gated_ensembles_need_a_matching_gate() {
    assert!(Ensemble::new(EnsembleMode::MoeEm, experts(3), None).is_err());
    let wrong = Network::new(gate_spec(2), 0).unwrap();
    assert!(Ensemble::new(EnsembleMode::BoostedGated, experts(3), Some(wrong)).is_err());
    assert!(Ensemble::new(EnsembleMode::BoostedOracle, experts(3), None).is_ok());
    let oracle = Ensemble::new(EnsembleMode::BoostedOracle, experts(3), None).unwrap();
    let x = gen_disk_ring(4, 0).inputs;
    assert!(ensemble_predict(&oracle, x.view(), None).is_err());
}

#[test]
fn binary_oracle_bounds_any_gate() {
    // For two classes a convex combination can only favour the truth if some
    // expert does.
    let data = gen_vshape(300, 2).to_batch::<f64>();
    for seed in 0..5 {
        let gate = Network::new(gate_spec(4), seed).unwrap();
        let ens = Ensemble::new(EnsembleMode::MoeEm, experts(4), Some(gate)).unwrap();
        let (pred, _) = ensemble_predict(&ens, data.inputs(), None).unwrap();
        let gated = accuracy(&pred, &data.labels).unwrap();
        assert!(oracle_accuracy(&ens.experts, data.inputs(), &data.labels).unwrap() >= gated);
    }
}

#[test]
fn ensemble_store_round_trips() {
    let gate = Network::new(gate_spec(3), 9).unwrap();
    let ens = Ensemble::new(EnsembleMode::BoostedGated, experts(3), Some(gate)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_ensemble(&ens, dir.path(), serde_json::json!({"note": "test"})).unwrap();
    let (back, manifest) = load_ensemble::<f64>(dir.path()).unwrap();
    assert_eq!(back, ens);
    assert_eq!(manifest.p, 3);
    assert_eq!(manifest.metadata["note"], "test");
}

#[test]
fn mixture_keeps_experts_convex_and_responsibilities_normalized() {
    let data = gen_vshape(400, 3).to_batch::<f64>();
    let inner = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let cfg = MoeConfig {
        rounds: 3,
        expert_train: inner.clone(),
        gate_train: inner,
        seed: 1,
        ..MoeConfig::default()
    };
    let out = moe_em_fit(&vec![expert_spec(); 3], &gate_spec(3), &data, &cfg).unwrap();
    for row in out.responsibilities.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
    }
    for e in &out.ensemble.experts {
        let r = jensen_check(e, &BoxSampler::cube(2, -3.0, 3.0), 2000, 1e-9, 0).unwrap();
        assert!(r.certified(), "{}", r.summary());
    }
}

#[test]
fn boosting_reports_one_error_per_expert() {
    let data = gen_disk_ring(300, 4).to_batch::<f64>();
    let inner = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let out = boost_fit(&expert_spec(), &data, 3, &inner, &ConstraintPolicy::strict(), 7).unwrap();
    assert_eq!(out.experts.len(), 3);
    assert_eq!(out.errors.len(), 3);
    let mean = out.weights.iter().sum::<f64>() / out.weights.len() as f64;
    assert!((mean - 1.0).abs() < 1e-9, "{mean}");
}
