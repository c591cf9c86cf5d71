use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossKind};
use super::optim::{AdamParams, Optimizer, OptimizerKind};
use crate::constraints::{audit_nonnegativity, build_mask, project, ConstraintMask, ConstraintPolicy};
use crate::net::{predict_from_logits, Batch, Mode, Network};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply by `decay` every `every_n_epochs` epochs.
    Step { decay: f64, every_n_epochs: usize },
}

impl LrSchedule {
    /// Rate for 1-based `epoch`.
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step {
                decay,
                every_n_epochs,
            } => base * decay.powi(((epoch - 1) / every_n_epochs.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopping {
    #[default]
    Off,
    Patience(usize),
}

fn d_lr() -> f64 {
    1e-4
}
fn d_batch() -> usize {
    64
}
fn d_epochs() -> usize {
    2000
}
fn d_conv() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_conv")]
    pub convergence_loss: f64,
    #[serde(default)]
    pub early_stopping: EarlyStopping,
    /// `None` trains without sign constraints unless the model carries a policy.
    #[serde(default)]
    pub constraint: Option<ConstraintPolicy>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the loss implied by the model's final map.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: d_lr(),
            lr_schedule: LrSchedule::Constant,
            batch_size: d_batch(),
            max_epochs: d_epochs(),
            convergence_loss: d_conv(),
            early_stopping: EarlyStopping::Off,
            constraint: None,
            seed: 0,
            loss: None,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.convergence_loss >= 0.0) {
            return Err(Error::Config("convergence_loss must be >= 0".into()));
        }
        if let LrSchedule::Step { decay, every_n_epochs } = self.lr_schedule {
            if !(decay > 0.0) || every_n_epochs == 0 {
                return Err(Error::Config("step schedule needs decay > 0 and every_n_epochs >= 1".into()));
            }
        }
        if let Some(p) = &self.constraint {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub lr: f64,
    pub constraint_violations: usize,
    /// Held-out monitor set; never used for model selection.
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    /// Wall-clock seconds; excluded from equality-sensitive outputs.
    pub epoch_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch with the best validation accuracy (train accuracy
    /// without a validation set); earliest wins ties.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn last(&self) -> &EpochRecord {
        self.records.last().expect("history has at least one record")
    }

    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch - 1]
    }

    /// Per-epoch log. Timing is left out so reruns compare byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr,constraint_violations,test_loss,test_acc\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{:.10},{:.10},{},{},{:e},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc),
                r.lr,
                r.constraint_violations,
                opt(r.test_loss),
                opt(r.test_acc)
            )
            .ok();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub batches: usize,
}

/// Mutable training state bound to one model: optimizer moments and mask.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    pub optimizer: Optimizer<S>,
    pub policy: Option<ConstraintPolicy>,
    pub mask: ConstraintMask,
    pub loss: LossKind,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: &Network<S>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let policy = config.constraint.clone().or_else(|| model.policy().cloned());
        let mask = policy
            .as_ref()
            .map(|p| build_mask(model, p))
            .unwrap_or_default();
        Ok(Trainer {
            optimizer: Optimizer::new(config.optimizer, config.adam, model),
            policy,
            mask,
            loss: config.loss.unwrap_or_else(|| LossKind::for_spec(model.spec())),
        })
    }

    pub fn project(&self, model: &mut Network<S>) {
        if let Some(p) = &self.policy {
            project(model, &self.mask, p);
        }
    }
}

/// One pass over `data` in a seeded shuffled order; every optimizer step is
/// followed by the constraint projection.
pub fn train_epoch<S: Scalar>(
    model: &mut Network<S>,
    data: &Batch<S>,
    config: &TrainConfig,
    trainer: &mut Trainer<S>,
    epoch: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Data("training data is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ epoch as u64);
    order.shuffle(&mut rng);
    let lr = S::of(config.lr_schedule.rate(config.learning_rate, epoch));

    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut batches = 0;
    for (b, idx) in order.chunks(config.batch_size).enumerate() {
        let wrap = |e: Error| Error::BatchFailure {
            batch: b,
            source: Box::new(e),
        };
        let batch = data.select(idx);
        let fwd = model.forward(batch.inputs(), Mode::Train).map_err(wrap)?;
        let (loss, d) = loss_and_grad(trainer.loss, fwd.logits.view(), &batch).map_err(wrap)?;
        if !loss.is_finite() {
            return Err(wrap(Error::NonFiniteLoss(loss.as_f64())));
        }
        let grads = model.backward(&fwd.cache, d.view()).map_err(wrap)?;
        model.commit_batch_stats(&fwd.cache).map_err(wrap)?;
        trainer.optimizer.step(model, &grads, lr).map_err(wrap)?;
        trainer.project(model);

        loss_sum += loss.as_f64() * idx.len() as f64;
        correct += predict_from_logits(fwd.logits.view())
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
        batches += 1;
    }
    Ok(EpochStats {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        batches,
    })
}

/// Infer-mode loss and accuracy.
pub fn evaluate<S: Scalar>(model: &Network<S>, data: &Batch<S>, loss: LossKind) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Data("evaluation data is empty".into()));
    }
    let logits = model.logits(data.inputs())?;
    let (l, _) = loss_and_grad(loss, logits.view(), data)?;
    let preds = predict_from_logits(logits.view());
    let acc = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count() as f64 / data.len() as f64;
    Ok((l.as_f64(), acc))
}

/// Trains until convergence, the epoch limit or early stopping. With early
/// stopping on, `model` ends as the best-epoch snapshot.
pub fn fit<S: Scalar>(
    model: &mut Network<S>,
    train: &Batch<S>,
    val: Option<&Batch<S>>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    let (hist, best) = fit_with_snapshot(model, train, val, None, config)?;
    if config.early_stopping != EarlyStopping::Off {
        *model = best;
    }
    Ok(hist)
}

/// Like [`fit`] but leaves `model` at the final epoch and returns the
/// best-epoch snapshot separately. `monitor` is only evaluated and logged.
pub fn fit_with_snapshot<S: Scalar>(
    model: &mut Network<S>,
    train: &Batch<S>,
    val: Option<&Batch<S>>,
    monitor: Option<&Batch<S>>,
    config: &TrainConfig,
) -> Result<(TrainHistory, Network<S>)> {
    let mut trainer = Trainer::new(model, config)?;
    trainer.project(model);
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, Network<S>)> = None;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs.max(1) {
        let t0 = Instant::now();
        let stats = train_epoch(model, train, config, &mut trainer, epoch)?;
        let (val_loss, val_acc) = match val {
            Some(v) => {
                let (l, a) = evaluate(model, v, trainer.loss)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let (test_loss, test_acc) = match monitor {
            Some(m) => {
                let (l, a) = evaluate(model, m, trainer.loss)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let score = val_acc.unwrap_or(stats.accuracy);
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((epoch, score, model.clone()));
        }
        records.push(EpochRecord {
            epoch,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            val_loss,
            val_acc,
            lr: config.lr_schedule.rate(config.learning_rate, epoch),
            constraint_violations: audit_nonnegativity(model, &trainer.mask).len(),
            test_loss,
            test_acc,
            epoch_time: t0.elapsed().as_secs_f64(),
        });
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if stats.loss < config.convergence_loss {
            stop = StopReason::Converged;
            break;
        }
        if let EarlyStopping::Patience(p) = config.early_stopping {
            if epoch - best_epoch >= p {
                stop = StopReason::EarlyStop;
                break;
            }
        }
    }
    let (best_epoch, _, snapshot) = best.expect("at least one epoch ran");
    Ok((
        TrainHistory {
            records,
            best_epoch,
            stop_reason: stop,
        },
        snapshot,
    ))
}
