use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::net::{Gradients, Network};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check_shapes<S: Scalar>(params: &[&mut ArrayD<S>], grads: &[ArrayD<S>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "parameter {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

/// `w <- w - lr * g`
pub fn sgd_step<S: Scalar>(params: &mut [&mut ArrayD<S>], grads: &[ArrayD<S>], lr: S) -> Result<()> {
    check_shapes(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.zip_mut_with(g, |w, &gw| *w -= lr * gw);
    }
    Ok(())
}

/// Adam moments; zero-initialized with timestep 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<ArrayD<S>>,
    pub v: Vec<ArrayD<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn zeros_like(params: &[&ArrayD<S>]) -> Self {
        AdamState {
            m: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut ArrayD<S>],
    grads: &[ArrayD<S>],
    state: &mut AdamState<S>,
    lr: S,
    hp: AdamParams,
) -> Result<()> {
    check_shapes(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::Shape("adam state does not match parameters".into()));
    }
    state.t += 1;
    let (b1, b2, eps) = (S::of(hp.beta1), S::of(hp.beta2), S::of(hp.eps));
    let c1 = S::one() - b1.powi(state.t as i32);
    let c2 = S::one() - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        ndarray::Zip::from(&mut **p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &gw, mw, vw| {
                *mw = b1 * *mw + (S::one() - b1) * gw;
                *vw = b2 * *vw + (S::one() - b2) * gw * gw;
                let mhat = *mw / c1;
                let vhat = *vw / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            });
    }
    Ok(())
}

/// Optimizer bound to one model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<S> {
    Sgd,
    Adam { hp: AdamParams, state: AdamState<S> },
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, hp: AdamParams, model: &Network<S>) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => {
                let ps: Vec<&ArrayD<S>> = model.params().map(|(_, v)| v).collect();
                Optimizer::Adam {
                    hp,
                    state: AdamState::zeros_like(&ps),
                }
            }
        }
    }

    pub fn step(&mut self, model: &mut Network<S>, grads: &Gradients<S>, lr: S) -> Result<()> {
        let mut ps: Vec<&mut ArrayD<S>> = model.params_mut().map(|(_, v)| v).collect();
        match self {
            Optimizer::Sgd => sgd_step(&mut ps, &grads.values, lr),
            Optimizer::Adam { hp, state } => adam_step(&mut ps, &grads.values, state, lr, *hp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn sgd_definition() {
        let mut w = arr1(&[1.0f64]).into_dyn();
        sgd_step(&mut [&mut w], &[arr1(&[0.5]).into_dyn()], 0.1).unwrap();
        assert!((w[[0]] - 0.95f64).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let mut w = arr1(&[0.0f64]).into_dyn();
        let mut st = AdamState::zeros_like(&[&w]);
        adam_step(&mut [&mut w], &[arr1(&[1.0]).into_dyn()], &mut st, 0.001, AdamParams::default()).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let want = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((w[[0]] - want).abs() < 1e-18, "{}", w[[0]]);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut w = arr1(&[0.25f64, -3.0]).into_dyn();
        let before = w.clone();
        let z = arr1(&[0.0, 0.0]).into_dyn();
        let mut st = AdamState::zeros_like(&[&w]);
        for _ in 0..3 {
            adam_step(&mut [&mut w], std::slice::from_ref(&z), &mut st, 0.1, AdamParams::default()).unwrap();
            sgd_step(&mut [&mut w], std::slice::from_ref(&z), 0.1).unwrap();
        }
        assert_eq!(w, before);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = arr1(&[0.0f64]).into_dyn();
        assert!(sgd_step(&mut [&mut w], &[arr1(&[1.0, 2.0]).into_dyn()], 0.1).is_err());
    }
}
