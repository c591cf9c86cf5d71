use ndarray::{Array2, ArrayView2};

use crate::{Error, Result, Scalar};

/// Inputs with integer labels and optional dense targets and sample weights.
///
/// `targets` overrides the one-hot encoding of `labels` for the loss: soft
/// label distributions for classification, real values for regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub inputs: Array2<S>,
    pub labels: Vec<usize>,
    pub targets: Option<Array2<S>>,
    pub weights: Option<Vec<S>>,
}

impl<S: Scalar> Batch<S> {
    /// Classification batch; labels must lie in `[0, num_classes)`.
    pub fn new(inputs: Array2<S>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Batch {
            inputs,
            labels,
            targets: None,
            weights: None,
        })
    }

    /// Regression batch; `labels` are all zero.
    pub fn regression(inputs: Array2<S>, targets: Array2<S>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Shape("inputs and targets differ in row count".into()));
        }
        let n = inputs.nrows();
        Ok(Batch {
            inputs,
            labels: vec![0; n],
            targets: Some(targets),
            weights: None,
        })
    }

    pub fn with_targets(mut self, targets: Array2<S>) -> Result<Self> {
        if targets.nrows() != self.len() {
            return Err(Error::Shape("targets row count differs from batch".into()));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<S>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Shape("weight count differs from batch".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::Data("sample weights must be finite and non-negative".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> ArrayView2<'_, S> {
        self.inputs.view()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Batch<S> {
        let inputs = self.inputs.select(ndarray::Axis(0), idx);
        Batch {
            inputs,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            targets: self
                .targets
                .as_ref()
                .map(|t| t.select(ndarray::Axis(0), idx)),
            weights: self
                .weights
                .as_ref()
                .map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }

    /// One-hot rows of width `width`.
    pub fn one_hot(&self, width: usize) -> Array2<S> {
        let mut t = Array2::zeros((self.len(), width));
        for (i, &l) in self.labels.iter().enumerate() {
            t[(i, l)] = S::one();
        }
        t
    }
}
