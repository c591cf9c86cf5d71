//! Datasets: synthetic 2-D generators, IDX ingestion, whitening and
//! seeded label/partition transforms. Every transform appends to the
//! dataset's provenance so its contents can be regenerated.

mod idx;
mod ops;
mod synth;
mod whiten;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
pub use ops::{randomize_labels, split, subsample, Split};
pub use synth::{gen_disk_ring, gen_vshape, in_vshape_band, VSHAPE_HALF_WIDTH};
pub use whiten::{whiten_apply, whiten_fit, WhiteningTransform};

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::net::Batch;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub steps: Vec<String>,
}

impl Provenance {
    pub fn new(source: impl Into<String>) -> Self {
        Provenance {
            source: source.into(),
            steps: Vec::new(),
        }
    }

    pub fn then(&self, step: impl Into<String>) -> Self {
        let mut p = self.clone();
        p.steps.push(step.into());
        p
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)?;
        for s in &self.steps {
            write!(f, " | {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize, provenance: Provenance) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {l} outside [0, {num_classes})")));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn select(&self, idx: &[usize], step: impl Into<String>) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.then(step),
        }
    }

    /// Maps each label through `groups` (`groups[old] = new`).
    pub fn regroup(&self, groups: &[usize]) -> Result<Dataset> {
        if groups.len() != self.num_classes {
            return Err(Error::Data(format!(
                "grouping has {} entries for {} classes",
                groups.len(),
                self.num_classes
            )));
        }
        let k = groups.iter().max().map_or(0, |m| m + 1);
        let labels = self.labels.iter().map(|&l| groups[l]).collect();
        Dataset::new(
            self.inputs.clone(),
            labels,
            k,
            self.provenance.then(format!("regroup({groups:?})")),
        )
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx, format!("take({n})"))
    }

    /// Block means over `factor x factor` tiles of square `side x side`
    /// single-channel images stored row-major.
    pub fn avg_pool(&self, side: usize, factor: usize) -> Result<Dataset> {
        if side * side != self.dim() || factor == 0 || !side.is_multiple_of(factor) {
            return Err(Error::Data(format!(
                "cannot pool {}-dim rows as {side}x{side} images by {factor}",
                self.dim()
            )));
        }
        let s = side / factor;
        let norm = (factor * factor) as f64;
        let x = Array2::from_shape_fn((self.len(), s * s), |(i, j)| {
            let (by, bx) = (j / s, j % s);
            let mut t = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    t += self.inputs[(i, (by * factor + dy) * side + bx * factor + dx)];
                }
            }
            t / norm
        });
        Ok(Dataset {
            inputs: x,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            provenance: self.provenance.then(format!("avg_pool(side={side}, factor={factor})")),
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn to_batch<S: Scalar>(&self) -> Batch<S> {
        Batch {
            inputs: self.inputs.mapv(S::of),
            labels: self.labels.clone(),
            targets: None,
            weights: None,
        }
    }

    /// Header `x0,..,x{d-1},label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim() {
            write!(out, "x{j},").ok();
        }
        out.push_str("label\n");
        for (row, l) in self.inputs.axis_iter(Axis(0)).zip(&self.labels) {
            for v in row {
                write!(out, "{v},").ok();
            }
            writeln!(out, "{l}").ok();
        }
        out
    }

    /// Per-column minimum and maximum.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .inputs
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let hi = self
            .inputs
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        (lo, hi)
    }
}
