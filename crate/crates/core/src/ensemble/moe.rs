use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::combine::{expert_probabilities, gate_weights, Ensemble, EnsembleMode};
use crate::constraints::ConstraintPolicy;
use crate::net::{Batch, ModelSpec, Network};
use crate::train::{fit, TrainConfig};
use crate::{Error, Result, Scalar};

fn d_rounds() -> usize {
    5
}

fn inner() -> TrainConfig {
    TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoeConfig {
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    /// Per-round training of every expert (constraint set from `policy`).
    #[serde(default = "inner")]
    pub expert_train: TrainConfig,
    /// Per-round training of the gate on soft responsibilities.
    #[serde(default = "inner")]
    pub gate_train: TrainConfig,
    #[serde(default)]
    pub policy: ConstraintPolicy,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MoeConfig {
    fn default() -> Self {
        MoeConfig {
            rounds: d_rounds(),
            expert_train: inner(),
            gate_train: inner(),
            policy: ConstraintPolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeOutcome<S> {
    pub ensemble: Ensemble<S>,
    pub responsibilities: Array2<f64>,
    /// Reinitializations of experts whose responsibility mass vanished.
    pub events: Vec<String>,
}

/// Column mass below this fraction of `n` counts as a collapsed expert.
const DEGENERATE_MASS: f64 = 1e-6;
/// Likelihood floor keeping responsibilities finite.
const MIN_LIKELIHOOD: f64 = 1e-12;

/// Hard nearest-centre assignment to `p` seeded sample centres.
fn initial_responsibilities<S: Scalar>(x: &Array2<S>, p: usize, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = index::sample(&mut rng, n, p.min(n)).into_vec();
    let mut r = Array2::zeros((n, p));
    for i in 0..n {
        let xi = x.row(i);
        let best = centres
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let d: f64 = xi
                    .iter()
                    .zip(x.row(c).iter())
                    .map(|(a, b)| (*a - *b).as_f64().powi(2))
                    .sum();
                (k, d)
            })
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
            .0;
        r[(i, best)] = 1.0;
    }
    r
}

fn weighted<S: Scalar>(data: &Batch<S>, col: ndarray::ArrayView1<f64>) -> Result<Batch<S>> {
    let mass: f64 = col.sum();
    let n = data.len() as f64;
    // Mean-one weights keep the loss scale independent of the mass.
    let w: Vec<S> = col.iter().map(|&r| S::of((r * n / mass).max(1e-12))).collect();
    data.clone().with_weights(w)
}

/// Alternates expert and gate training on EM responsibilities
/// `r_ik ~ gate_k(x_i) * P_k(y_i | x_i)`.
pub fn moe_em_fit<S: Scalar>(
    expert_specs: &[ModelSpec],
    gate_spec: &ModelSpec,
    data: &Batch<S>,
    config: &MoeConfig,
) -> Result<MoeOutcome<S>> {
    let p = expert_specs.len();
    if p == 0 {
        return Err(Error::Config("mixture needs at least one expert".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("mixture training data is empty".into()));
    }
    if p > 1 && gate_spec.num_outputs != p {
        return Err(Error::Shape(format!(
            "gate has {} outputs for {p} experts",
            gate_spec.num_outputs
        )));
    }
    config.policy.validate()?;
    let n = data.len();
    let expert_cfg = TrainConfig {
        constraint: Some(config.policy.clone()),
        ..config.expert_train.clone()
    };
    let gate_cfg = TrainConfig {
        constraint: None,
        ..config.gate_train.clone()
    };
    let mut experts = expert_specs
        .iter()
        .enumerate()
        .map(|(k, s)| Network::new_convex(s.clone(), config.seed.wrapping_add(k as u64 + 1), config.policy.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut gate = if p > 1 {
        Some(Network::<S>::new(gate_spec.clone(), config.seed.wrapping_add(1000))?)
    } else {
        None
    };
    let mut r = initial_responsibilities(&data.inputs, p, config.seed);
    let mut events = Vec::new();
    let mut reinit_seed = config.seed.wrapping_add(2000);

    for round in 1..=config.rounds.max(1) {
        if round > 1 {
            // E-step.
            let w = gate_weights(gate.as_ref(), p, data.inputs())?;
            for (k, e) in experts.iter().enumerate() {
                let pr = expert_probabilities(e, data.inputs())?;
                for i in 0..n {
                    let lik = pr[(i, data.labels[i])].as_f64().max(MIN_LIKELIHOOD);
                    r[(i, k)] = w[(i, k)].as_f64() * lik;
                }
            }
            for mut row in r.rows_mut() {
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            for k in 0..p {
                if r.column(k).sum() < DEGENERATE_MASS * n as f64 {
                    reinit_seed += 1;
                    experts[k] = Network::new_convex(expert_specs[k].clone(), reinit_seed, config.policy.clone())?;
                    r.column_mut(k).fill(1.0 / p as f64);
                    for mut row in r.rows_mut() {
                        let s = row.sum();
                        row.mapv_inplace(|v| v / s);
                    }
                    events.push(format!("round {round}: expert {k} lost its responsibility mass; reinitialized"));
                }
            }
        }
        // M-step.
        for (k, e) in experts.iter_mut().enumerate() {
            let cfg = TrainConfig {
                seed: expert_cfg.seed.wrapping_add((round * p + k) as u64),
                ..expert_cfg.clone()
            };
            fit(e, &weighted(data, r.column(k))?, None, &cfg)?;
        }
        if let Some(g) = gate.as_mut() {
            let soft = data.clone().with_targets(r.mapv(S::of))?;
            let cfg = TrainConfig {
                seed: gate_cfg.seed.wrapping_add(round as u64),
                ..gate_cfg.clone()
            };
            fit(g, &soft, None, &cfg)?;
        }
    }
    Ok(MoeOutcome {
        ensemble: Ensemble::new(EnsembleMode::MoeEm, experts, gate)?,
        responsibilities: r,
        events,
    })
}
