//! Accuracy, generalization gap and calibration.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::net::argmax;
use crate::{Error, Result, Scalar};

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `train - test`; negative when the test set scores higher.
pub fn generalization_gap(train_acc: f64, test_acc: f64) -> f64 {
    train_acc - test_acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    /// Zero for empty bins, as is `accuracy`.
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Equal-width confidence bins over `(0, 1]`. Bin `b` holds
/// `b/n <= c < (b+1)/n`; the last bin also holds `c = 1`. A confidence that
/// lands exactly on an interior boundary therefore goes to the upper bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub n_bins: usize,
    pub bins: Vec<Bin>,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi,mean_confidence,accuracy,count\n");
        for (i, b) in self.bins.iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{:.10},{:.10},{}",
                b.lo, b.hi, b.mean_confidence, b.accuracy, b.count
            )
            .ok();
        }
        out
    }
}

fn edge(k: usize, n: usize) -> f64 {
    k as f64 / n as f64
}

fn bin_of(c: f64, n: usize) -> usize {
    let mut b = ((c * n as f64).floor() as usize).min(n - 1);
    // `c * n` can round across an edge; settle against the exact edges.
    while b > 0 && c < edge(b, n) {
        b -= 1;
    }
    while b + 1 < n && c >= edge(b + 1, n) {
        b += 1;
    }
    b
}

/// Expected calibration error `sum_b (n_b / n) |acc_b - conf_b|`.
pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<(f64, ReliabilityBins)> {
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be >= 1".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Shape(format!(
            "{} confidences for {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if let Some(c) = confidences.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::Data(format!("confidence {c} outside (0, 1]")));
    }
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let s = &mut sums[bin_of(c, n_bins)];
        s.0 += c;
        s.1 += usize::from(ok);
        s.2 += 1;
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(b, &(csum, hits, count))| {
            let (conf, acc) = if count == 0 {
                (0.0, 0.0)
            } else {
                (csum / count as f64, hits as f64 / count as f64)
            };
            if count > 0 {
                total += count as f64 / n * (acc - conf).abs();
            }
            Bin {
                lo: edge(b, n_bins),
                hi: edge(b + 1, n_bins),
                mean_confidence: conf,
                accuracy: acc,
                count,
            }
        })
        .collect();
    Ok((total, ReliabilityBins { n_bins, bins }))
}

/// Max-probability confidence and correctness of each row.
pub fn confidence_and_correct<S: Scalar>(probs: ArrayView2<S>, labels: &[usize]) -> (Vec<f64>, Vec<bool>) {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            let k = argmax(row);
            (row[k].as_f64(), k == l)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snapshot {
    /// Best-validation-accuracy epoch.
    Peak,
    /// Model at the stopping criterion.
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub snapshot: Snapshot,
    pub noise_fraction: f64,
    pub epochs: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gen_gap: f64,
}

impl RunReport {
    pub fn new(model: impl Into<String>, snapshot: Snapshot, noise_fraction: f64, epochs: usize, train_acc: f64, test_acc: f64) -> Self {
        RunReport {
            model: model.into(),
            snapshot,
            noise_fraction,
            epochs,
            train_acc,
            test_acc,
            gen_gap: generalization_gap(train_acc, test_acc),
        }
    }

    pub const CSV_HEADER: &'static str = "model,snapshot,noise_fraction,epochs,train_acc,test_acc,gen_gap";

    pub fn csv_row(&self) -> String {
        let snap = match self.snapshot {
            Snapshot::Peak => "peak",
            Snapshot::Convergence => "convergence",
        };
        format!(
            "{},{snap},{},{},{:.6},{:.6},{:.6}",
            self.model, self.noise_fraction, self.epochs, self.train_acc, self.test_acc, self.gen_gap
        )
    }

    pub fn table_csv(reports: &[RunReport]) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}
