use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{audit_nonnegativity, build_mask, ConstraintPolicy, Violation};
use crate::net::{LayerSpec, Network};
use crate::{Error, Result, Scalar};

/// Rounding headroom for 64-bit evaluation; not a semantic slack.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Rows evaluated per forward pass.
const CHUNK: usize = 512;

pub trait InputSampler {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

/// Uniform over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSampler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSampler {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        BoxSampler {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    /// Bounding box of `rows`, each side widened by `inflate` times its
    /// extent in total (half on each end).
    pub fn around(rows: &Array2<f64>, inflate: f64) -> Self {
        let mut lo = vec![f64::INFINITY; rows.ncols()];
        let mut hi = vec![f64::NEG_INFINITY; rows.ncols()];
        for row in rows.rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for j in 0..lo.len() {
            let pad = (hi[j] - lo[j]) * inflate / 2.0;
            lo[j] -= pad;
            hi[j] += pad;
        }
        BoxSampler { lo, hi }
    }
}

impl InputSampler for BoxSampler {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *o = self.lo[j] + u * (self.hi[j] - self.lo[j]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralAudit {
    /// Negative entries among weights that must be non-negative (batchnorm
    /// gamma included: frozen batchnorm scales by `gamma / sqrt(var + eps)`).
    pub sign_violations: Vec<Violation>,
    /// Layers whose activation is not convex and non-decreasing.
    pub non_convex_activations: Vec<usize>,
    pub pass: bool,
}

pub fn structural_audit<S: Scalar>(model: &Network<S>) -> StructuralAudit {
    let mask = build_mask(model, &ConstraintPolicy::strict());
    let sign_violations = audit_nonnegativity(model, &mask);
    let non_convex_activations: Vec<usize> = model
        .spec()
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            LayerSpec::Activation { activation } if !activation.is_convex_nondecreasing() => Some(i + 1),
            _ => None,
        })
        .collect();
    let pass = sign_violations.is_empty() && non_convex_activations.is_empty();
    StructuralAudit {
        sign_violations,
        non_convex_activations,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstTriple {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub lambda: f64,
    pub output_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub structural: StructuralAudit,
    pub structural_pass: bool,
    pub triples_tested: usize,
    /// `max f(l x1 + (1-l) x2) - (l f(x1) + (1-l) f(x2))` over triples and
    /// logit coordinates.
    pub max_violation: f64,
    pub worst_triple: WorstTriple,
    pub tolerance: f64,
    /// `max_violation <= tolerance`.
    pub pass: bool,
}

impl ConvexityReport {
    /// Structurally valid and no sampled counterexample.
    pub fn certified(&self) -> bool {
        self.structural_pass && self.pass
    }

    pub fn summary(&self) -> String {
        format!(
            "{} structural={} max_violation={:.3e} tolerance={:.1e} triples={} worst: output {} lambda {:.6}",
            if self.certified() { "PASS" } else { "FAIL" },
            self.structural_pass,
            self.max_violation,
            self.tolerance,
            self.triples_tested,
            self.worst_triple.output_index,
            self.worst_triple.lambda
        )
    }
}

/// Samples `n_triples` `(x1, x2, lambda)` and checks Jensen's inequality on
/// every logit of the infer-mode network. Softmax/sigmoid are never applied.
pub fn jensen_check<S: Scalar>(
    model: &Network<S>,
    sampler: &dyn InputSampler,
    n_triples: usize,
    tolerance: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let d = model.spec().input_len();
    if sampler.dim() != d {
        return Err(Error::Shape(format!(
            "sampler produces {} dims, model takes {d}",
            sampler.dim()
        )));
    }
    if n_triples == 0 {
        return Err(Error::Config("jensen_check needs at least one triple".into()));
    }
    let structural = structural_audit(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (f64::NEG_INFINITY, Vec::new(), Vec::new(), 0.0, 0usize);
    let mut done = 0;
    while done < n_triples {
        let m = CHUNK.min(n_triples - done);
        let mut x1 = Array2::<f64>::zeros((m, d));
        let mut x2 = Array2::<f64>::zeros((m, d));
        let mut lam = vec![0.0; m];
        for (i, li) in lam.iter_mut().enumerate() {
            sampler.sample(&mut rng, x1.row_mut(i).as_slice_mut().expect("standard layout"));
            sampler.sample(&mut rng, x2.row_mut(i).as_slice_mut().expect("standard layout"));
            // Open interval (0, 1).
            *li = loop {
                let l: f64 = rng.random();
                if l > 0.0 {
                    break l;
                }
            };
        }
        let xm = Array2::from_shape_fn((m, d), |(i, j)| lam[i] * x1[(i, j)] + (1.0 - lam[i]) * x2[(i, j)]);
        let f1 = model.logits(x1.mapv(S::of).view())?;
        let f2 = model.logits(x2.mapv(S::of).view())?;
        let fm = model.logits(xm.mapv(S::of).view())?;
        for i in 0..m {
            let l = S::of(lam[i]);
            for k in 0..f1.ncols() {
                let v = (fm[(i, k)] - (l * f1[(i, k)] + (S::one() - l) * f2[(i, k)])).as_f64();
                if v > worst.0 {
                    worst = (v, x1.row(i).to_vec(), x2.row(i).to_vec(), lam[i], k);
                }
            }
        }
        done += m;
    }
    let (max_violation, x1, x2, lambda, output_index) = worst;
    Ok(ConvexityReport {
        structural_pass: structural.pass,
        structural,
        triples_tested: n_triples,
        max_violation,
        worst_triple: WorstTriple {
            x1,
            x2,
            lambda,
            output_index,
        },
        tolerance,
        pass: max_violation <= tolerance,
    })
}
