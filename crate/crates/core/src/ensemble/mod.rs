//! Ensembles of convex experts: EM-trained mixtures, boosting, gating.

mod boost;
mod combine;
mod moe;
mod store;

pub use boost::{boost_fit, gate_fit, gate_targets, BoostOutcome};
pub use combine::{
    ensemble_predict, expert_probabilities, gate_weights, oracle_accuracy, Ensemble, EnsembleMode,
};
pub use moe::{moe_em_fit, MoeConfig, MoeOutcome};
pub use store::{load_ensemble, save_ensemble, Manifest, MANIFEST_FILE};
