use iocnn::constraints::{audit_nonnegativity, build_mask, ConstraintPolicy};
use iocnn::data::gen_disk_ring;
use iocnn::net::{ActivationKind, FinalMap, ModelSpec, Network};
use iocnn::train::{evaluate, fit, EarlyStopping, LossKind, StopReason, TrainConfig};

fn disk_ring_spec() -> ModelSpec {
    ModelSpec::mlp(2, &[16, 16], 2, ActivationKind::Elu, false, FinalMap::Softmax)
}

fn quick() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 60,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn convex_model_fits_disk_ring_and_stays_feasible() {
    let data = gen_disk_ring(600, 1).to_batch::<f64>();
    let policy = ConstraintPolicy::strict();
    let mut net = Network::new_convex(disk_ring_spec(), 1, policy.clone()).unwrap();
    let hist = fit(&mut net, &data, None, &quick()).unwrap();
    assert!(hist.records.iter().all(|r| r.constraint_violations == 0));
    assert!(audit_nonnegativity(&net, &build_mask(&net, &policy)).is_empty());
    let (_, acc) = evaluate(&net, &data, LossKind::CrossEntropy).unwrap();
    assert!(acc >= 0.95, "{acc}");
}

#[test]
fn training_is_bit_reproducible() {
    let data = gen_disk_ring(200, 2).to_batch::<f64>();
    let run = || {
        let mut net = Network::new_convex(disk_ring_spec(), 5, ConstraintPolicy::strict()).unwrap();
        let h = fit(&mut net, &data, Some(&data), &TrainConfig { max_epochs: 5, ..quick() }).unwrap();
        (net, h.to_csv())
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert!(ha.starts_with("epoch,train_loss,train_acc,val_loss,val_acc,lr,constraint_violations,test_loss,test_acc\n"));
}

#[test]
fn convergence_loss_stops_training() {
    let data = gen_disk_ring(200, 4).to_batch::<f64>();
    let mut net = Network::new(disk_ring_spec(), 0).unwrap();
    let cfg = TrainConfig {
        convergence_loss: 0.5,
        max_epochs: 500,
        ..quick()
    };
    let h = fit(&mut net, &data, None, &cfg).unwrap();
    assert_eq!(h.stop_reason, StopReason::Converged);
    assert!(h.last().train_loss < 0.5);
}

#[test]
fn early_stopping_restores_best_epoch() {
    let data = gen_disk_ring(200, 6).to_batch::<f64>();
    let val = gen_disk_ring(100, 7).to_batch::<f64>();
    let mut net = Network::new(disk_ring_spec(), 0).unwrap();
    let cfg = TrainConfig {
        early_stopping: EarlyStopping::Patience(3),
        convergence_loss: 0.0,
        max_epochs: 200,
        ..quick()
    };
    let h = fit(&mut net, &data, Some(&val), &cfg).unwrap();
    assert_eq!(h.stop_reason, StopReason::EarlyStop);
    let best = h.best();
    assert_eq!(h.records.len(), h.best_epoch + 3);
    let (_, acc) = evaluate(&net, &val, LossKind::CrossEntropy).unwrap();
    assert_eq!(Some(acc), best.val_acc);
}

#[test]
fn single_precision_models_train() {
    let data = gen_disk_ring(400, 9).to_batch::<f32>();
    let mut net = Network::<f32>::new_convex(disk_ring_spec(), 2, ConstraintPolicy::strict()).unwrap();
    fit(&mut net, &data, None, &quick()).unwrap();
    let (_, acc) = evaluate(&net, &data, LossKind::CrossEntropy).unwrap();
    assert!(acc >= 0.9, "{acc}");
}
