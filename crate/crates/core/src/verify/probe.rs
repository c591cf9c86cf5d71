use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintPolicy;
use crate::net::{ActivationKind, Batch, FinalMap, LayerSpec, ModelSpec, Network};
use crate::train::{fit, LossKind, LrSchedule, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBudget {
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Adds the input to the output (`skip_add` from node 0).
    pub skip: bool,
}

impl Default for ProbeBudget {
    fn default() -> Self {
        ProbeBudget {
            epochs: 300,
            learning_rate: 1e-2,
            n_train: 256,
            n_test: 1001,
            batch_size: 32,
            seed: 0,
            skip: false,
        }
    }
}

fn grid(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 1), |(i, _)| {
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    })
}

/// Fits `y = x` on `[-1, 1]` with a two-layer IOC network (constrained
/// output layer) and returns the held-out mean squared error.
pub fn identity_fit_probe(activation: ActivationKind, hidden_width: usize, budget: &ProbeBudget) -> Result<f64> {
    if hidden_width == 0 || budget.n_train < 2 || budget.n_test == 0 {
        return Err(Error::Config("probe needs a hidden layer and at least two training points".into()));
    }
    let mut layers = vec![LayerSpec::dense(hidden_width), LayerSpec::act(activation), LayerSpec::dense(1)];
    if budget.skip {
        layers.push(LayerSpec::SkipAdd { from: 0 });
    }
    let spec = ModelSpec {
        input_shape: vec![1],
        layers,
        num_outputs: 1,
        final_map: FinalMap::None,
    };
    let mut model = Network::<f64>::new_convex(spec, budget.seed, ConstraintPolicy::strict())?;
    let x = grid(budget.n_train);
    let train = Batch::regression(x.clone(), x)?;
    let cfg = TrainConfig {
        learning_rate: budget.learning_rate,
        lr_schedule: LrSchedule::Constant,
        batch_size: budget.batch_size,
        max_epochs: budget.epochs,
        convergence_loss: 0.0,
        seed: budget.seed,
        loss: Some(LossKind::MeanSquared),
        ..TrainConfig::default()
    };
    fit(&mut model, &train, None, &cfg)?;
    // Held-out points sit between the training grid points.
    let xt = grid(budget.n_test).mapv(|v| v * 0.999);
    let pred = model.logits(xt.view())?;
    Ok((&pred - &xt).mapv(|e| e * e).mean().expect("non-empty"))
}
