//! Sign constraints that keep a network input-output convex.
//!
//! Every weight or filter tensor after the first parametric layer must stay
//! non-negative; biases are free. After each optimizer step the masked
//! tensors are pushed back into the feasible set by one of four projections.

use ndarray::{ArrayD, Dimension};
use serde::{Deserialize, Serialize};

use crate::net::{LayerSpec, Network, ParamId, ParamName};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionStrategy {
    /// `w < 0  ->  0`
    Clip,
    /// `w < 0  ->  |w|`
    Absolute,
    /// `w < 0  ->  exp(w - epsilon)`
    #[default]
    Exponentiate,
    /// Adds `|min(w)|` to the whole tensor when its minimum is negative.
    Shift,
}

impl ProjectionStrategy {
    pub const ALL: [ProjectionStrategy; 4] = [
        ProjectionStrategy::Clip,
        ProjectionStrategy::Absolute,
        ProjectionStrategy::Exponentiate,
        ProjectionStrategy::Shift,
    ];
}

fn default_epsilon() -> f64 {
    5.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintPolicy {
    #[serde(default)]
    pub strategy: ProjectionStrategy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "yes")]
    pub constrain_bn_gamma: bool,
    #[serde(default = "yes")]
    pub first_layer_exempt: bool,
}

impl Default for ConstraintPolicy {
    fn default() -> Self {
        Self::strict()
    }
}

impl ConstraintPolicy {
    /// Exponentiation with epsilon 5, batchnorm gamma constrained.
    pub fn strict() -> Self {
        ConstraintPolicy {
            strategy: ProjectionStrategy::Exponentiate,
            epsilon: default_epsilon(),
            constrain_bn_gamma: true,
            first_layer_exempt: true,
        }
    }

    /// Like [`ConstraintPolicy::strict`] but batchnorm gamma is left free.
    pub fn empirical() -> Self {
        ConstraintPolicy {
            constrain_bn_gamma: false,
            ..Self::strict()
        }
    }

    pub fn with_strategy(mut self, strategy: ProjectionStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if !self.first_layer_exempt {
            return Err(Error::Config(
                "the first parametric layer is always exempt from sign constraints".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters held to `>= 0`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintMask {
    pub entries: Vec<ParamId>,
}

impl ConstraintMask {
    pub fn contains(&self, id: ParamId) -> bool {
        self.entries.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_mask<S: Scalar>(model: &Network<S>, policy: &ConstraintPolicy) -> ConstraintMask {
    let mut entries = Vec::new();
    for layer in model.layers() {
        let Some(ord) = layer.ordinal else { continue };
        if ord == 1 {
            continue;
        }
        match layer.spec {
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => {
                entries.push(ParamId::new(ord, ParamName::Weight))
            }
            LayerSpec::Batchnorm if policy.constrain_bn_gamma => {
                entries.push(ParamId::new(ord, ParamName::Gamma))
            }
            _ => {}
        }
    }
    ConstraintMask { entries }
}

/// Projects a single tensor in place.
pub fn project_tensor<S: Scalar>(t: &mut ArrayD<S>, strategy: ProjectionStrategy, epsilon: f64) {
    let eps = S::of(epsilon);
    match strategy {
        ProjectionStrategy::Clip => t.mapv_inplace(|w| if w < S::zero() { S::zero() } else { w }),
        ProjectionStrategy::Absolute => t.mapv_inplace(|w| if w < S::zero() { -w } else { w }),
        ProjectionStrategy::Exponentiate => {
            t.mapv_inplace(|w| if w < S::zero() { (w - eps).exp() } else { w })
        }
        ProjectionStrategy::Shift => {
            let min = t.iter().copied().fold(S::infinity(), S::min);
            if min < S::zero() {
                let lift = -min;
                t.mapv_inplace(|w| (w + lift).max(S::zero()));
            }
        }
    }
}

/// Applies the policy's projection to every masked tensor of `model`.
pub fn project<S: Scalar>(model: &mut Network<S>, mask: &ConstraintMask, policy: &ConstraintPolicy) {
    for (id, value) in model.params_mut() {
        if mask.contains(id) {
            project_tensor(value, policy.strategy, policy.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub param: ParamId,
    pub index: Vec<usize>,
    pub value: f64,
}

/// Every masked entry that is negative (or NaN).
pub fn audit_nonnegativity<S: Scalar>(model: &Network<S>, mask: &ConstraintMask) -> Vec<Violation> {
    let mut out = Vec::new();
    for (id, value) in model.params() {
        if !mask.contains(id) {
            continue;
        }
        for (idx, &v) in value.indexed_iter() {
            if !(v >= S::zero()) {
                out.push(Violation {
                    param: id,
                    index: idx.slice().to_vec(),
                    value: v.as_f64(),
                });
            }
        }
    }
    out
}
