//! Logit-to-probability maps and the decisions derived from them.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::activation::sigmoid;
use super::spec::FinalMap;
use crate::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax<S: Scalar>(logits: ArrayView2<S>) -> Array2<S> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s: S = row.iter().copied().sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

pub fn apply_final_map<S: Scalar>(logits: ArrayView2<S>, map: FinalMap) -> Array2<S> {
    match map {
        FinalMap::None => logits.to_owned(),
        FinalMap::Softmax => softmax(logits),
        FinalMap::Sigmoid => logits.mapv(sigmoid),
    }
}

/// Index of the first maximal entry.
pub fn argmax<S: Scalar>(row: ArrayView1<S>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Class decisions from logits: a single output is thresholded at
/// `logit >= 0` (that is, `sigmoid >= 0.5`); wider outputs take the argmax.
pub fn predict_from_logits<S: Scalar>(logits: ArrayView2<S>) -> Vec<usize> {
    if logits.ncols() == 1 {
        logits
            .column(0)
            .iter()
            .map(|&v| usize::from(v >= S::zero()))
            .collect()
    } else {
        logits.axis_iter(Axis(0)).map(argmax).collect()
    }
}

/// Per-class probabilities. A single sigmoid output `p` becomes `[1 - p, p]`;
/// multi-output models use softmax unless their final map is sigmoid.
pub fn class_probabilities<S: Scalar>(logits: ArrayView2<S>, map: FinalMap) -> Array2<S> {
    if logits.ncols() == 1 {
        let mut out = Array2::zeros((logits.nrows(), 2));
        for (i, &v) in logits.column(0).iter().enumerate() {
            let p = sigmoid(v);
            out[(i, 0)] = S::one() - p;
            out[(i, 1)] = p;
        }
        out
    } else if map == FinalMap::Sigmoid {
        logits.mapv(sigmoid)
    } else {
        softmax(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_reference_row() {
        let p = softmax(array![[2.0f64, 1.0, 0.5]].view());
        // Reference values computed at 30 digits.
        #[allow(clippy::excessive_precision)]
        let want = [
            0.628_531_719_211_762_45,
            0.231_223_897_622_149_07,
            0.140_244_383_166_088_48,
        ];
        for j in 0..3 {
            assert!((p[(0, j)] - want[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_of_zero() {
        let p = apply_final_map(array![[0.0f64]].view(), FinalMap::Sigmoid);
        assert_eq!(p[(0, 0)], 0.5);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(array![1.0f64, 3.0, 3.0].view()), 1);
        assert_eq!(predict_from_logits(array![[-0.1f64], [0.0]].view()), vec![0, 1]);
    }
}
