use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::net::{argmax, class_probabilities, softmax, Network};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    MoeEm,
    BoostedGated,
    /// No gate; only [`oracle_accuracy`] is meaningful.
    BoostedOracle,
}

/// Convex experts plus an unconstrained gate. With a single expert the gate
/// is absent and the expert always has weight 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<S> {
    pub mode: EnsembleMode,
    pub experts: Vec<Network<S>>,
    pub gate: Option<Network<S>>,
}

impl<S: Scalar> Ensemble<S> {
    pub fn new(mode: EnsembleMode, experts: Vec<Network<S>>, gate: Option<Network<S>>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::Config("an ensemble needs at least one expert".into()));
        }
        let p = experts.len();
        let needs_gate = mode != EnsembleMode::BoostedOracle && p > 1;
        match (&gate, needs_gate) {
            (None, true) => return Err(Error::Config(format!("{mode:?} with {p} experts needs a gate"))),
            (Some(g), _) if g.spec().num_outputs != p => {
                return Err(Error::Shape(format!(
                    "gate has {} outputs for {p} experts",
                    g.spec().num_outputs
                )))
            }
            _ => {}
        }
        Ok(Ensemble { mode, experts, gate })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }
}

/// Per-class probabilities of one expert (`[1 - s, s]` for a single output).
pub fn expert_probabilities<S: Scalar>(expert: &Network<S>, x: ArrayView2<S>) -> Result<Array2<S>> {
    let z = expert.logits(x)?;
    Ok(class_probabilities(z.view(), expert.spec().final_map))
}

/// Gate weights `[n, p]`: softmax of the gate logits, or all ones for a
/// single expert.
pub fn gate_weights<S: Scalar>(gate: Option<&Network<S>>, p: usize, x: ArrayView2<S>) -> Result<Array2<S>> {
    match gate {
        _ if p == 1 => Ok(Array2::ones((x.nrows(), 1))),
        Some(g) => {
            if g.spec().num_outputs != p {
                return Err(Error::Shape(format!(
                    "gate has {} outputs for {p} experts",
                    g.spec().num_outputs
                )));
            }
            Ok(softmax(g.logits(x)?.view()))
        }
        None => Err(Error::Config("no gate to weight the experts".into())),
    }
}

/// Labels from the gate-weighted sum of the first `k` experts' probability
/// outputs (gate weights renormalized over them), plus the full weights.
pub fn ensemble_predict<S: Scalar>(
    ens: &Ensemble<S>,
    x: ArrayView2<S>,
    k: Option<usize>,
) -> Result<(Vec<usize>, Array2<S>)> {
    if ens.mode == EnsembleMode::BoostedOracle {
        return Err(Error::Config("oracle selection needs labels; use oracle_accuracy".into()));
    }
    let p = ens.len();
    let k = k.unwrap_or(p);
    if k == 0 || k > p {
        return Err(Error::Config(format!("cannot combine {k} of {p} experts")));
    }
    let w = gate_weights(ens.gate.as_ref(), p, x)?;
    let mut mix: Option<Array2<S>> = None;
    for (j, e) in ens.experts.iter().take(k).enumerate() {
        let pr = expert_probabilities(e, x)?;
        let scaled = &pr * &w.column(j).insert_axis(ndarray::Axis(1));
        mix = Some(match mix {
            None => scaled,
            Some(m) => {
                if m.ncols() != scaled.ncols() {
                    return Err(Error::Shape("experts disagree on the number of classes".into()));
                }
                m + scaled
            }
        });
    }
    // Renormalizing over the first k experts does not move the argmax.
    let mix = mix.expect("k >= 1");
    let labels = mix.rows().into_iter().map(argmax).collect();
    Ok((labels, w))
}

/// Fraction of samples that at least one expert classifies correctly.
pub fn oracle_accuracy<S: Scalar>(experts: &[Network<S>], x: ArrayView2<S>, labels: &[usize]) -> Result<f64> {
    if experts.is_empty() || labels.is_empty() {
        return Err(Error::Config("oracle accuracy needs experts and labelled data".into()));
    }
    let mut hit = vec![false; labels.len()];
    for e in experts {
        let z = e.logits(x)?;
        for (h, (p, l)) in hit.iter_mut().zip(crate::net::predict_from_logits(z.view()).iter().zip(labels)) {
            *h |= p == l;
        }
    }
    Ok(hit.iter().filter(|&&h| h).count() as f64 / labels.len() as f64)
}
