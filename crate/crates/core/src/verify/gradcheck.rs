use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::net::{Mode, Network, ParamId};
use crate::{Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub entries: usize,
    pub max_rel_err: f64,
    pub worst: Option<(ParamId, usize)>,
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`; the floor keeps entries
/// whose true gradient vanishes from dominating.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares backward gradients of `L = sum(d_logits * logits)` with central
/// differences of step `h`, entry by entry, over every parameter.
pub fn gradient_check<S: Scalar>(
    model: &Network<S>,
    x: ArrayView2<S>,
    d_logits: ArrayView2<S>,
    mode: Mode,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let fwd = model.forward(x, mode)?;
    let grads = model.backward(&fwd.cache, d_logits)?;
    let objective = |m: &Network<S>| -> Result<f64> {
        let z = m.forward(x, mode)?.logits;
        Ok((&z * &d_logits).iter().map(|v| v.as_f64()).sum())
    };
    let mut probe = model.clone();
    let mut out = GradCheck {
        entries: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (id, g) in grads.ids.iter().zip(&grads.values) {
        for (j, &analytic) in g.iter().enumerate() {
            let orig = probe.param(*id).expect("gradient ids name parameters").as_slice_memory_order().expect("contiguous")[j];
            let set = |m: &mut Network<S>, v: S| {
                m.param_mut(*id).expect("present").as_slice_memory_order_mut().expect("contiguous")[j] = v;
            };
            set(&mut probe, orig + S::of(h));
            let up = objective(&probe)?;
            set(&mut probe, orig - S::of(h));
            let down = objective(&probe)?;
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * h);
            let e = relative_error(analytic.as_f64(), numeric, floor);
            out.entries += 1;
            if out.worst.is_none() || e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = Some((*id, j));
            }
        }
    }
    Ok(out)
}
