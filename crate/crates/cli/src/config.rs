//! Experiment configuration (JSON). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use iocnn::constraints::ConstraintPolicy;
use iocnn::ensemble::MoeConfig;
use iocnn::net::{LayerSpec, ModelSpec};
use iocnn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Every random choice of the experiment derives from this seed; the
    /// `seed` fields of nested training configs are overwritten.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    /// Baseline architecture; the convex variant widens its first layer.
    pub model: ModelSpec,
    #[serde(default)]
    pub ioc: IocConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Training of the convex variant; defaults to `train`.
    #[serde(default)]
    pub ioc_train: Option<TrainConfig>,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    /// Train/validation/test fractions (class-stratified).
    #[serde(default = "d_split")]
    pub split: [f64; 3],
    /// ZCA variance floor; fitted on the training split only.
    #[serde(default)]
    pub whiten: Option<f64>,
}

fn d_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    DiskRing { n: usize },
    Vshape { n: usize },
    /// Relative paths resolve against the config file's directory.
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// `groups[old_label] = new_label`.
    Regroup { groups: Vec<usize> },
    /// Seeded class-stratified subset of `n` samples.
    Subsample { n: usize },
    /// Mean over non-overlapping `factor x factor` blocks of square images.
    AvgPool { side: usize, factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IocConfig {
    /// Width multiplier for the first parametric layer of the convex variant.
    #[serde(default = "d_widening")]
    pub widening: f64,
    #[serde(default)]
    pub policy: ConstraintPolicy,
}

fn d_widening() -> f64 {
    2.0
}

impl Default for IocConfig {
    fn default() -> Self {
        IocConfig {
            widening: d_widening(),
            policy: ConstraintPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_triples")]
    pub triples: usize,
    #[serde(default = "d_tol")]
    pub tolerance: f64,
    /// Relative growth of the training-data bounding box used for sampling.
    #[serde(default = "d_inflate")]
    pub inflate: f64,
}

fn d_triples() -> usize {
    10_000
}
fn d_tol() -> f64 {
    iocnn::verify::DEFAULT_TOLERANCE
}
fn d_inflate() -> f64 {
    0.2
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            triples: d_triples(),
            tolerance: d_tol(),
            inflate: d_inflate(),
        }
    }
}

fn d_fractions() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}
fn d_bins() -> usize {
    10
}
fn d_gate_hidden() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    Compare,
    NoiseSweep {
        #[serde(default = "d_fractions")]
        fractions: Vec<f64>,
    },
    Moe {
        experts: usize,
        /// Expert architecture; defaults to `model`.
        #[serde(default)]
        expert_model: Option<ModelSpec>,
        #[serde(default = "d_gate_hidden")]
        gate_hidden: usize,
        #[serde(default)]
        moe: MoeConfig,
    },
    Boost {
        experts: usize,
        #[serde(default)]
        expert_model: Option<ModelSpec>,
        #[serde(default = "d_gate_hidden")]
        gate_hidden: usize,
        /// Gate training; defaults to `train`.
        #[serde(default)]
        gate_train: Option<TrainConfig>,
    },
    Verify {
        /// Model to certify; when absent the convex variant is trained first.
        #[serde(default)]
        model_path: Option<PathBuf>,
    },
    Calibrate {
        #[serde(default = "d_bins")]
        n_bins: usize,
    },
}

impl ExperimentKind {
    pub fn verb(&self) -> &'static str {
        match self {
            ExperimentKind::Compare => "compare",
            ExperimentKind::NoiseSweep { .. } => "sweep",
            ExperimentKind::Moe { .. } => "moe",
            ExperimentKind::Boost { .. } => "boost",
            ExperimentKind::Verify { .. } => "verify",
            ExperimentKind::Calibrate { .. } => "calibrate",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Parses `path` and resolves relative data paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Idx { images, labels } = &mut self.dataset.source {
            fix(images);
            fix(labels);
        }
        if let ExperimentKind::Verify { model_path: Some(p) } = &mut self.experiment {
            fix(p);
        }
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let Some(t) = &self.ioc_train {
            t.validate()?;
        }
        self.ioc.policy.validate()?;
        if !(self.ioc.widening >= 1.0 && self.ioc.widening.is_finite()) {
            return Err(CliError::Config(format!("widening must be >= 1, got {}", self.ioc.widening)));
        }
        let missing = |p: &Path| -> CliResult<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(CliError::Config(format!("referenced file {} does not exist", p.display())))
            }
        };
        if let DataSource::Idx { images, labels } = &self.dataset.source {
            missing(images)?;
            missing(labels)?;
        }
        match &self.experiment {
            ExperimentKind::NoiseSweep { fractions } => {
                if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(CliError::Config("noise fractions must lie in [0, 1]".into()));
                }
            }
            ExperimentKind::Moe { experts, .. } | ExperimentKind::Boost { experts, .. } if *experts == 0 => {
                return Err(CliError::Config("ensembles need at least one expert".into()));
            }
            ExperimentKind::Verify { model_path: Some(p) } => missing(p)?,
            ExperimentKind::Calibrate { n_bins: 0 } => {
                return Err(CliError::Config("n_bins must be >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn ioc_train(&self) -> TrainConfig {
        self.ioc_train.clone().unwrap_or_else(|| self.train.clone())
    }
}

/// `spec` with its first parametric dense/conv layer widened by `factor`.
pub fn widen_first_layer(spec: &ModelSpec, factor: f64) -> ModelSpec {
    let mut out = spec.clone();
    let n = out.layers.len();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        // The last layer fixes the output width and is never widened.
        if i + 1 == n {
            break;
        }
        match layer {
            LayerSpec::Dense { units } => {
                *units = (*units as f64 * factor).ceil() as usize;
                break;
            }
            LayerSpec::Conv2d { filters, .. } => {
                *filters = (*filters as f64 * factor).ceil() as usize;
                break;
            }
            _ => {}
        }
    }
    out
}
