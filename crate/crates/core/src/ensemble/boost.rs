use crate::constraints::ConstraintPolicy;
use crate::net::{predict_from_logits, Batch, ModelSpec, Network};
use crate::train::{fit, TrainConfig};
use crate::{Error, Result, Scalar};

use super::combine::expert_probabilities;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome<S> {
    pub experts: Vec<Network<S>>,
    /// Weights the last expert was trained on (mean 1).
    pub weights: Vec<f64>,
    /// Weighted training error of each expert.
    pub errors: Vec<f64>,
    pub events: Vec<String>,
}

/// Discrete AdaBoost-style reweighting: after each expert, misclassified
/// samples are scaled by `exp(beta)` with `beta = ln((1 - err) / err)`, then
/// weights are renormalized to mean 1.
pub fn boost_fit<S: Scalar>(
    expert_spec: &ModelSpec,
    data: &Batch<S>,
    n_experts: usize,
    inner: &TrainConfig,
    policy: &ConstraintPolicy,
    seed: u64,
) -> Result<BoostOutcome<S>> {
    if n_experts == 0 {
        return Err(Error::Config("boosting needs at least one expert".into()));
    }
    let n = data.len();
    let mut w = vec![1.0f64; n];
    let mut experts = Vec::with_capacity(n_experts);
    let mut errors = Vec::with_capacity(n_experts);
    let mut events = Vec::new();
    for t in 0..n_experts {
        if t > 0 {
            let prev: &Network<S> = experts.last().expect("t > 0");
            let miss = misclassified(prev, data)?;
            let total: f64 = w.iter().sum();
            let err: f64 = w.iter().zip(&miss).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / total;
            errors.push(err);
            if err >= 0.5 {
                w.fill(1.0);
                events.push(format!("expert {}: weighted error {err:.4} >= 0.5; weights reset", t - 1));
            } else if err > 0.0 {
                // exp(beta) with beta = ln((1 - err) / err).
                let scale = (1.0 - err) / err;
                for (v, &m) in w.iter_mut().zip(&miss) {
                    if m {
                        *v *= scale;
                    }
                }
                let mean = w.iter().sum::<f64>() / n as f64;
                w.iter_mut().for_each(|v| *v /= mean);
            }
        }
        let mut e = Network::new_convex(expert_spec.clone(), seed.wrapping_add(t as u64 + 1), policy.clone())?;
        let cfg = TrainConfig {
            constraint: Some(policy.clone()),
            seed: inner.seed.wrapping_add(t as u64),
            ..inner.clone()
        };
        let batch = data.clone().with_weights(w.iter().map(|&v| S::of(v)).collect())?;
        fit(&mut e, &batch, None, &cfg)?;
        experts.push(e);
    }
    let last = experts.last().expect("n_experts >= 1");
    let miss = misclassified(last, data)?;
    let total: f64 = w.iter().sum();
    errors.push(w.iter().zip(&miss).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / total);
    Ok(BoostOutcome {
        experts,
        weights: w,
        errors,
        events,
    })
}

fn misclassified<S: Scalar>(model: &Network<S>, data: &Batch<S>) -> Result<Vec<bool>> {
    let z = model.logits(data.inputs())?;
    Ok(predict_from_logits(z.view())
        .iter()
        .zip(&data.labels)
        .map(|(p, l)| p != l)
        .collect())
}

/// Index of the expert that is correct with the highest true-class
/// probability; with no correct expert, the highest true-class probability.
pub fn gate_targets<S: Scalar>(experts: &[Network<S>], data: &Batch<S>) -> Result<Vec<usize>> {
    let mut best = vec![(false, f64::NEG_INFINITY, 0usize); data.len()];
    for (k, e) in experts.iter().enumerate() {
        let pr = expert_probabilities(e, data.inputs())?;
        let z = e.logits(data.inputs())?;
        let pred = predict_from_logits(z.view());
        for i in 0..data.len() {
            let cand = (pred[i] == data.labels[i], pr[(i, data.labels[i])].as_f64());
            let b = &mut best[i];
            if (cand.0, cand.1) > (b.0, b.1) {
                *b = (cand.0, cand.1, k);
            }
        }
    }
    Ok(best.into_iter().map(|b| b.2).collect())
}

/// Trains an unconstrained gate to pick, per sample, the expert from
/// [`gate_targets`]. Experts are only read.
pub fn gate_fit<S: Scalar>(
    experts: &[Network<S>],
    gate_spec: &ModelSpec,
    data: &Batch<S>,
    config: &TrainConfig,
    seed: u64,
) -> Result<Network<S>> {
    let p = experts.len();
    if gate_spec.num_outputs != p {
        return Err(Error::Shape(format!(
            "gate has {} outputs for {p} experts",
            gate_spec.num_outputs
        )));
    }
    if gate_spec.input_len() != data.inputs.ncols() {
        return Err(Error::Shape(format!(
            "gate takes {} inputs, data has {}",
            gate_spec.input_len(),
            data.inputs.ncols()
        )));
    }
    let targets = gate_targets(experts, data)?;
    let batch = Batch::new(data.inputs.clone(), targets, p.max(2))?;
    let mut gate = Network::new(gate_spec.clone(), seed)?;
    let cfg = TrainConfig {
        constraint: None,
        ..config.clone()
    };
    fit(&mut gate, &batch, None, &cfg)?;
    Ok(gate)
}
