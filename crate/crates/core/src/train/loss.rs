use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::net::{sigmoid, Batch, FinalMap, ModelSpec};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy (fused log-softmax).
    CrossEntropy,
    /// Per-output sigmoid cross-entropy on logits.
    BinaryCrossEntropy,
    MeanSquared,
}

impl LossKind {
    /// Loss matching the model's final map: sigmoid heads use binary
    /// cross-entropy, everything else softmax cross-entropy.
    pub fn for_spec(spec: &ModelSpec) -> Self {
        match spec.final_map {
            FinalMap::Sigmoid => LossKind::BinaryCrossEntropy,
            _ if spec.num_outputs == 1 => LossKind::BinaryCrossEntropy,
            _ => LossKind::CrossEntropy,
        }
    }
}

/// Mean softmax cross-entropy of integer labels and its logit gradient
/// `(softmax - one_hot) / n`.
pub fn cross_entropy<S: Scalar>(logits: ArrayView2<S>, labels: &[usize]) -> (S, Array2<S>) {
    let mut t = Array2::zeros(logits.dim());
    for (i, &l) in labels.iter().enumerate() {
        t[(i, l)] = S::one();
    }
    soft_cross_entropy(logits, t.view(), None)
}

/// Weighted softmax cross-entropy against target distributions.
fn soft_cross_entropy<S: Scalar>(
    logits: ArrayView2<S>,
    targets: ArrayView2<S>,
    weights: Option<&[S]>,
) -> (S, Array2<S>) {
    let n = logits.nrows();
    let wsum: S = match weights {
        Some(w) => w.iter().copied().sum(),
        None => S::of(n as f64),
    };
    let mut grad = Array2::zeros(logits.dim());
    let mut total = S::zero();
    for (i, (z, t)) in logits.axis_iter(Axis(0)).zip(targets.axis_iter(Axis(0))).enumerate() {
        let w = weights.map_or(S::one(), |w| w[i]);
        let m = z.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<S>().ln();
        let tsum: S = t.iter().copied().sum();
        let mut li = S::zero();
        for (j, (&zj, &tj)) in z.iter().zip(t.iter()).enumerate() {
            li += tj * (lse - zj);
            grad[(i, j)] = w * ((zj - lse).exp() * tsum - tj) / wsum;
        }
        total += w * li;
    }
    (total / wsum, grad)
}

fn binary_cross_entropy<S: Scalar>(
    logits: ArrayView2<S>,
    targets: ArrayView2<S>,
    weights: Option<&[S]>,
) -> (S, Array2<S>) {
    let n = logits.nrows();
    let wsum: S = match weights {
        Some(w) => w.iter().copied().sum(),
        None => S::of(n as f64),
    };
    let mut grad = Array2::zeros(logits.dim());
    let mut total = S::zero();
    for (i, (z, t)) in logits.axis_iter(Axis(0)).zip(targets.axis_iter(Axis(0))).enumerate() {
        let w = weights.map_or(S::one(), |w| w[i]);
        for (j, (&zj, &tj)) in z.iter().zip(t.iter()).enumerate() {
            let l = zj.max(S::zero()) - zj * tj + (-zj.abs()).exp().ln_1p();
            total += w * l;
            grad[(i, j)] = w * (sigmoid(zj) - tj) / wsum;
        }
    }
    (total / wsum, grad)
}

fn mean_squared<S: Scalar>(
    out: ArrayView2<S>,
    targets: ArrayView2<S>,
    weights: Option<&[S]>,
) -> (S, Array2<S>) {
    let (n, c) = out.dim();
    let wsum: S = match weights {
        Some(w) => w.iter().copied().sum(),
        None => S::of(n as f64),
    } * S::of(c as f64);
    let mut grad = Array2::zeros(out.dim());
    let mut total = S::zero();
    for (i, (z, t)) in out.axis_iter(Axis(0)).zip(targets.axis_iter(Axis(0))).enumerate() {
        let w = weights.map_or(S::one(), |w| w[i]);
        for (j, (&zj, &tj)) in z.iter().zip(t.iter()).enumerate() {
            let d = zj - tj;
            total += w * d * d;
            grad[(i, j)] = S::of(2.0) * w * d / wsum;
        }
    }
    (total / wsum, grad)
}

/// Dense targets for `batch` as seen by `kind`.
pub fn targets_for<S: Scalar>(kind: LossKind, batch: &Batch<S>, width: usize) -> Result<Array2<S>> {
    if let Some(t) = &batch.targets {
        if t.ncols() != width {
            return Err(Error::Shape(format!(
                "targets have {} columns, model has {width} outputs",
                t.ncols()
            )));
        }
        return Ok(t.clone());
    }
    match kind {
        LossKind::BinaryCrossEntropy if width == 1 => Ok(Array2::from_shape_fn(
            (batch.len(), 1),
            |(i, _)| if batch.labels[i] == 1 { S::one() } else { S::zero() },
        )),
        LossKind::MeanSquared => Err(Error::Config("mean-squared loss needs explicit targets".into())),
        _ => {
            if let Some(&bad) = batch.labels.iter().find(|&&l| l >= width) {
                return Err(Error::Data(format!("label {bad} outside [0, {width})")));
            }
            Ok(batch.one_hot(width))
        }
    }
}

/// Loss value and logit gradient of `logits` against `batch`.
pub fn loss_and_grad<S: Scalar>(
    kind: LossKind,
    logits: ArrayView2<S>,
    batch: &Batch<S>,
) -> Result<(S, Array2<S>)> {
    let targets = targets_for(kind, batch, logits.ncols())?;
    let w = batch.weights.as_deref();
    Ok(match kind {
        LossKind::CrossEntropy => soft_cross_entropy(logits, targets.view(), w),
        LossKind::BinaryCrossEntropy => binary_cross_entropy(logits, targets.view(), w),
        LossKind::MeanSquared => mean_squared(logits, targets.view(), w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reference_values() {
        let (l, g) = cross_entropy(array![[2.0f64, 1.0, 0.5]].view(), &[0]);
        // -ln(softmax_0) from a 30-digit reference.
        assert!((l - 0.464_368_784_107_944_84).abs() < 1e-14);
        assert!((g.sum()).abs() < 1e-15);
        let (l, _) = cross_entropy(array![[10.0f64, 0.0, 0.0]].view(), &[0]);
        assert!(l <= 1e-4);
        let (l, _) = cross_entropy(array![[0.0f64, 0.0]].view(), &[1]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let z = array![[0.3f64, -1.2, 2.0], [0.0, 0.5, -0.5]];
        let labels = [2, 0];
        let (_, g) = cross_entropy(z.view(), &labels);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut zp = z.clone();
                zp[(i, j)] += h;
                let mut zm = z.clone();
                zm[(i, j)] -= h;
                let fd = (cross_entropy(zp.view(), &labels).0 - cross_entropy(zm.view(), &labels).0) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bce_matches_definition() {
        let z = array![[0.7f64], [-2.0]];
        let b = Batch::new(array![[0.0], [0.0]], vec![1, 0], 2).unwrap();
        let (l, g) = loss_and_grad(LossKind::BinaryCrossEntropy, z.view(), &b).unwrap();
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = (-(s(0.7)).ln() - (1.0 - s(-2.0)).ln()) / 2.0;
        assert!((l - want).abs() < 1e-14);
        assert!((g[(0, 0)] - (s(0.7) - 1.0) / 2.0).abs() < 1e-15);
    }
}
