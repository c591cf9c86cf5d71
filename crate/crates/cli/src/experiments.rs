//! Experiment runners. Each writes its artifacts into an output directory
//! and returns the numbers it reported.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use iocnn::constraints::ConstraintPolicy;
use iocnn::data::{
    gen_disk_ring, gen_vshape, load_idx, randomize_labels, split, subsample, whiten_apply, whiten_fit, Dataset, Split,
};
use iocnn::ensemble::{
    boost_fit, ensemble_predict, gate_fit, gate_weights, moe_em_fit, oracle_accuracy, save_ensemble, Ensemble,
    EnsembleMode,
};
use iocnn::metrics::{accuracy, confidence_and_correct, ece, ReliabilityBins, RunReport, Snapshot};
use iocnn::net::{
    class_probabilities, load_model, predict_from_logits, save_model, ActivationKind, Batch, FinalMap, ModelSpec,
    Network,
};
use iocnn::train::{evaluate, fit, fit_with_snapshot, LossKind, TrainConfig, TrainHistory};
use iocnn::verify::{boundary_extract, jensen_check, BoxSampler, ConvexityReport, GridSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::{widen_first_layer, DataSource, ExperimentConfig, ExperimentKind, Transform};
use crate::svg::{emit_svg, PlotData, PlotKind, Series};
use crate::{CliError, CliResult, Context};

/// Independent random streams carved out of the config seed.
mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const INIT_BASELINE: u64 = 10;
    pub const INIT_IOC: u64 = 11;
    pub const TRAIN_BASELINE: u64 = 20;
    pub const TRAIN_IOC: u64 = 21;
    pub const VERIFY: u64 = 30;
    pub const NOISE: u64 = 40;
    pub const ENSEMBLE: u64 = 50;
    pub const GATE: u64 = 51;
    pub const SINGLE: u64 = 52;
}

/// SplitMix64 finalizer over `seed` and a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const BOUNDARY_CELLS: usize = 200;
const CONVERGENCE: &str = "convergence";

/// Output sink: a directory every artifact is written into immediately.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    /// Creates `dir`, refusing a non-empty existing one.
    pub fn create(dir: impl AsRef<Path>) -> CliResult<Self> {
        let dir = dir.as_ref().to_path_buf();
        let io = |e| CliError::Io(dir.display().to_string(), e);
        if dir.exists() {
            if std::fs::read_dir(&dir).map_err(io)?.next().is_some() {
                return Err(CliError::Config(format!(
                    "output directory {} exists and is not empty",
                    dir.display()
                )));
            }
        } else {
            std::fs::create_dir_all(&dir).map_err(io)?;
        }
        Ok(Out { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Io(p.display().to_string(), e))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// Dataset after transforms, split and (train-fitted) whitening.
pub fn prepare_data(cfg: &ExperimentConfig) -> CliResult<Split> {
    let seed = cfg.seed;
    let mut data = match &cfg.dataset.source {
        DataSource::DiskRing { n } => gen_disk_ring(*n, derive_seed(seed, stream::DATA)),
        DataSource::Vshape { n } => gen_vshape(*n, derive_seed(seed, stream::DATA)),
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
    };
    for (i, t) in cfg.dataset.transforms.iter().enumerate() {
        data = match t {
            Transform::Regroup { groups } => data.regroup(groups)?,
            Transform::Subsample { n } => subsample(&data, *n, derive_seed(seed, stream::SUBSAMPLE + 100 * i as u64))?,
            Transform::AvgPool { side, factor } => data.avg_pool(*side, *factor)?,
        };
    }
    let mut parts = split(&data, cfg.dataset.split, derive_seed(seed, stream::SPLIT))?;
    if let Some(floor) = cfg.dataset.whiten {
        let w = whiten_fit(&parts.train, floor)?;
        parts = Split {
            train: whiten_apply(&w, &parts.train)?,
            val: whiten_apply(&w, &parts.val)?,
            test: whiten_apply(&w, &parts.test)?,
        };
    }
    if parts.train.dim() != cfg.model.input_len() {
        return Err(CliError::Config(format!(
            "model takes {} inputs but the dataset has {} features",
            cfg.model.input_len(),
            parts.train.dim()
        )));
    }
    Ok(parts)
}

/// One trained variant of the experiment's architecture.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub name: String,
    pub model: Network<f64>,
    pub peak: Network<f64>,
    pub history: TrainHistory,
    pub convergence: RunReport,
    pub peak_report: RunReport,
}

fn report(name: &str, snap: Snapshot, noise: f64, epochs: usize, m: &Network<f64>, s: &Split, loss: LossKind) -> CliResult<RunReport> {
    let (_, tr) = evaluate(m, &s.train.to_batch(), loss)?;
    let (_, te) = evaluate(m, &s.test.to_batch(), loss)?;
    Ok(RunReport::new(name, snap, noise, epochs, tr, te))
}

/// Trains one variant with `policy` (`None` = unconstrained).
#[allow(clippy::too_many_arguments)]
pub fn run_variant(
    name: &str,
    spec: &ModelSpec,
    policy: Option<&ConstraintPolicy>,
    train: &TrainConfig,
    init_seed: u64,
    train_seed: u64,
    data: &Split,
    noise: f64,
) -> CliResult<VariantRun> {
    let mut model = match policy {
        Some(p) => Network::new_convex(spec.clone(), init_seed, p.clone())?,
        None => Network::new(spec.clone(), init_seed)?,
    };
    let cfg = TrainConfig {
        constraint: policy.cloned(),
        seed: train_seed,
        ..train.clone()
    };
    let (tb, vb, xb) = (data.train.to_batch(), data.val.to_batch(), data.test.to_batch());
    let (history, peak) = fit_with_snapshot(&mut model, &tb, Some(&vb), Some(&xb), &cfg).context(|| format!("training {name}"))?;
    let loss = cfg.loss.unwrap_or_else(|| LossKind::for_spec(spec));
    let convergence = report(name, Snapshot::Convergence, noise, history.records.len(), &model, data, loss)?;
    let peak_report = report(name, Snapshot::Peak, noise, history.best_epoch, &peak, data, loss)?;
    Ok(VariantRun {
        name: name.to_string(),
        model,
        peak,
        history,
        convergence,
        peak_report,
    })
}

fn sampler_for(data: &Dataset, inflate: f64) -> BoxSampler {
    BoxSampler::around(&data.inputs, inflate)
}

pub fn certify(model: &Network<f64>, data: &Dataset, cfg: &ExperimentConfig, stream_offset: u64) -> CliResult<ConvexityReport> {
    let sampler = sampler_for(data, cfg.verify.inflate);
    Ok(jensen_check(
        model,
        &sampler,
        cfg.verify.triples,
        cfg.verify.tolerance,
        derive_seed(cfg.seed, stream::VERIFY + stream_offset),
    )?)
}

fn grid_for(data: &Dataset) -> GridSpec {
    let (lo, hi) = data.bounding_box();
    let pad = |j: usize| (hi[j] - lo[j]) * 0.1;
    GridSpec {
        x_range: (lo[0] - pad(0), hi[0] + pad(0)),
        y_range: (lo[1] - pad(1), hi[1] + pad(1)),
        nx: BOUNDARY_CELLS,
        ny: BOUNDARY_CELLS,
    }
}

fn scatter(data: &Dataset) -> Vec<(f64, f64, usize)> {
    data.inputs
        .rows()
        .into_iter()
        .zip(&data.labels)
        .map(|(r, &l)| (r[0], r[1], l))
        .collect()
}

fn boundary_svg(out: &Out, file: &str, title: &str, model: &Network<f64>, data: &Dataset) -> CliResult<()> {
    let grid = grid_for(data);
    let b = boundary_extract(model, grid)?;
    emit_svg(
        PlotKind::BoundaryMap,
        &PlotData::LabelGrid {
            title: title.to_string(),
            labels: &b.labels,
            x_range: grid.x_range,
            y_range: grid.y_range,
            points: scatter(data),
        },
        out.path(file),
    )
}

fn curve_series(runs: &[&VariantRun], f: impl Fn(&iocnn::train::EpochRecord) -> (f64, f64), what: &str) -> Vec<Series> {
    let mut series = Vec::new();
    for r in runs {
        let (a, b): (Vec<f64>, Vec<f64>) = r.history.records.iter().map(&f).unzip();
        series.push(Series {
            name: format!("{} train {what}", r.name),
            values: a,
        });
        series.push(Series {
            name: format!("{} test {what}", r.name),
            values: b,
        });
    }
    series
}

fn pad_series(mut s: Vec<Series>) -> Vec<Series> {
    // Runs may stop at different epochs; hold the last value.
    let len = s.iter().map(|x| x.values.len()).max().unwrap_or(0);
    for x in &mut s {
        let last = x.values.last().copied().unwrap_or(f64::NAN);
        x.values.resize(len, last);
    }
    s
}

fn curves(out: &Out, tag: &str, runs: &[&VariantRun]) -> CliResult<()> {
    let loss = pad_series(curve_series(runs, |r| (r.train_loss, r.test_loss.unwrap_or(f64::NAN)), "loss"));
    emit_svg(
        PlotKind::LossCurves,
        &PlotData::Curves {
            title: format!("loss per epoch{tag}"),
            series: loss,
        },
        out.path(&format!("loss_curves{tag}.svg")),
    )?;
    let acc = pad_series(curve_series(runs, |r| (r.train_acc, r.test_acc.unwrap_or(f64::NAN)), "acc"));
    emit_svg(
        PlotKind::AccuracyCurves,
        &PlotData::Curves {
            title: format!("accuracy per epoch{tag}"),
            series: acc,
        },
        out.path(&format!("accuracy_curves{tag}.svg")),
    )
}

pub struct Variants {
    pub baseline: ModelSpec,
    pub ioc: ModelSpec,
}

pub fn variants(cfg: &ExperimentConfig) -> CliResult<Variants> {
    let ioc = widen_first_layer(&cfg.model, cfg.ioc.widening);
    ioc.validate().context(|| "widened convex variant".to_string())?;
    Ok(Variants {
        baseline: cfg.model.clone(),
        ioc,
    })
}

fn train_pair(cfg: &ExperimentConfig, data: &Split, noise: f64, salt: u64) -> CliResult<(VariantRun, VariantRun)> {
    let v = variants(cfg)?;
    let s = |k: u64| derive_seed(cfg.seed ^ salt, k);
    let base = run_variant(
        "baseline",
        &v.baseline,
        None,
        &cfg.train,
        s(stream::INIT_BASELINE),
        s(stream::TRAIN_BASELINE),
        data,
        noise,
    )?;
    let ioc = run_variant(
        "ioc",
        &v.ioc,
        Some(&cfg.ioc.policy),
        &cfg.ioc_train(),
        s(stream::INIT_IOC),
        s(stream::TRAIN_IOC),
        data,
        noise,
    )?;
    Ok((base, ioc))
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub baseline: VariantRun,
    pub ioc: VariantRun,
    pub convexity: ConvexityReport,
}

pub fn run_compare(cfg: &ExperimentConfig, out: &Out) -> CliResult<CompareOutcome> {
    out.write("config.json", &cfg.to_json()?)?;
    let data = prepare_data(cfg)?;
    let (baseline, ioc) = train_pair(cfg, &data, 0.0, 0)?;
    for r in [&baseline, &ioc] {
        out.write(&format!("{}_history.csv", r.name), &r.history.to_csv())?;
        save_model(&r.model, out.path(&format!("{}.iocnn", r.name)))?;
    }
    let reports = [
        baseline.convergence.clone(),
        baseline.peak_report.clone(),
        ioc.convergence.clone(),
        ioc.peak_report.clone(),
    ];
    out.write("reports.csv", &RunReport::table_csv(&reports))?;
    out.json("reports.json", &reports)?;
    curves(out, "", &[&baseline, &ioc])?;
    let convexity = certify(&ioc.model, &data.train, cfg, 0)?;
    out.json("ioc_convexity.json", &convexity)?;
    if data.train.dim() == 2 {
        boundary_svg(out, "boundary_baseline.svg", "baseline decision regions", &baseline.model, &data.train)?;
        boundary_svg(out, "boundary_ioc.svg", "convex decision regions", &ioc.model, &data.train)?;
    }
    Ok(CompareOutcome {
        baseline,
        ioc,
        convexity,
    })
}

fn fraction_tag(f: f64) -> String {
    format!("p{:03}", (f * 100.0).round() as u64)
}

/// Randomizes the training labels only; validation and test stay clean.
pub fn run_noise_sweep(cfg: &ExperimentConfig, out: &Out, fractions: &[f64]) -> CliResult<Vec<RunReport>> {
    out.write("config.json", &cfg.to_json()?)?;
    let clean = prepare_data(cfg)?;
    let mut rows = Vec::new();
    for &f in fractions {
        let salt = f.to_bits();
        let noisy = Split {
            train: randomize_labels(&clean.train, f, derive_seed(cfg.seed ^ salt, stream::NOISE))?,
            ..clean.clone()
        };
        let (base, ioc) = train_pair(cfg, &noisy, f, salt).context(|| format!("noise fraction {f}"))?;
        let tag = fraction_tag(f);
        for r in [&base, &ioc] {
            out.write(&format!("{}_{tag}_history.csv", r.name), &r.history.to_csv())?;
            rows.push(r.peak_report.clone());
            rows.push(r.convergence.clone());
        }
        curves(out, &format!("_{tag}"), &[&base, &ioc])?;
        // Flushed after every fraction so partial sweeps survive failures.
        out.write("sweep.csv", &RunReport::table_csv(&rows))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub mode: EnsembleMode,
    pub p: usize,
    pub single_train_acc: f64,
    pub single_test_acc: f64,
    pub ensemble_train_acc: f64,
    pub ensemble_test_acc: f64,
    pub oracle_train_acc: f64,
    pub oracle_test_acc: f64,
    /// `(k, train_acc, test_acc)` using the first `k` experts.
    pub per_k: Vec<(usize, f64, f64)>,
    pub experts_certified: Vec<bool>,
    pub max_expert_violation: f64,
    pub events: Vec<String>,
}

fn ensemble_acc(ens: &Ensemble<f64>, d: &Dataset, k: Option<usize>) -> CliResult<f64> {
    let b: Batch<f64> = d.to_batch();
    let (pred, _) = ensemble_predict(ens, b.inputs(), k)?;
    Ok(accuracy(&pred, &b.labels)?)
}

fn model_acc(m: &Network<f64>, d: &Dataset) -> CliResult<f64> {
    let b: Batch<f64> = d.to_batch();
    let z = m.logits(b.inputs())?;
    Ok(accuracy(&predict_from_logits(z.view()), &b.labels)?)
}

fn default_gate(d: usize, hidden: usize, p: usize) -> ModelSpec {
    ModelSpec::mlp(d, &[hidden], p.max(2), ActivationKind::Elu, false, FinalMap::Softmax)
}

fn finish_ensemble(
    cfg: &ExperimentConfig,
    out: &Out,
    data: &Split,
    ens: &Ensemble<f64>,
    single: &Network<f64>,
    events: Vec<String>,
) -> CliResult<EnsembleSummary> {
    let p = ens.len();
    let mut per_k = Vec::new();
    let mut csv = String::from("k,train_acc,test_acc\n");
    for k in 1..=p {
        let (a, b) = (ensemble_acc(ens, &data.train, Some(k))?, ensemble_acc(ens, &data.test, Some(k))?);
        writeln!(csv, "{k},{a:.6},{b:.6}").ok();
        per_k.push((k, a, b));
    }
    out.write("accuracy_vs_experts.csv", &csv)?;
    let oracle = |d: &Dataset| -> CliResult<f64> {
        let b: Batch<f64> = d.to_batch();
        Ok(oracle_accuracy(&ens.experts, b.inputs(), &b.labels)?)
    };
    let mut reports = Vec::new();
    for (k, e) in ens.experts.iter().enumerate() {
        reports.push(certify(e, &data.train, cfg, 1 + k as u64)?);
    }
    out.json("expert_convexity.json", &reports)?;
    let summary = EnsembleSummary {
        mode: ens.mode,
        p,
        single_train_acc: model_acc(single, &data.train)?,
        single_test_acc: model_acc(single, &data.test)?,
        ensemble_train_acc: per_k[p - 1].1,
        ensemble_test_acc: per_k[p - 1].2,
        oracle_train_acc: oracle(&data.train)?,
        oracle_test_acc: oracle(&data.test)?,
        per_k,
        experts_certified: reports.iter().map(|r| r.certified()).collect(),
        max_expert_violation: reports.iter().map(|r| r.max_violation).fold(f64::NEG_INFINITY, f64::max),
        events,
    };
    let mut s = String::from("model,train_acc,test_acc\n");
    for (name, a, b) in [
        ("single_expert", summary.single_train_acc, summary.single_test_acc),
        ("gate", summary.ensemble_train_acc, summary.ensemble_test_acc),
        ("oracle", summary.oracle_train_acc, summary.oracle_test_acc),
    ] {
        writeln!(s, "{name},{a:.6},{b:.6}").ok();
    }
    out.write("summary.csv", &s)?;
    out.json("summary.json", &summary)?;
    save_model(single, out.path("single_expert.iocnn"))?;
    save_ensemble(
        ens,
        out.path("ensemble"),
        json!({ "seed": cfg.seed, "config": "config.json", "events": summary.events }),
    )?;
    if data.train.dim() == 2 {
        let grid = grid_for(&data.train);
        if let Some(g) = &ens.gate {
            let n = grid.nx * grid.ny;
            let x = ndarray::Array2::from_shape_fn((n, 2), |(i, j)| grid.point(i % grid.nx, i / grid.nx)[j]);
            let w = gate_weights(Some(g), p, x.view())?;
            let labels = ndarray::Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
                iocnn::net::argmax(w.row(iy * grid.nx + ix))
            });
            emit_svg(
                PlotKind::GatePartition,
                &PlotData::LabelGrid {
                    title: "gate assignment".into(),
                    labels: &labels,
                    x_range: grid.x_range,
                    y_range: grid.y_range,
                    points: Vec::new(),
                },
                out.path("gate_partition.svg"),
            )?;
        }
        for (k, e) in ens.experts.iter().enumerate() {
            boundary_svg(out, &format!("boundary_expert_{k}.svg"), &format!("expert {k}"), e, &data.train)?;
        }
    }
    Ok(summary)
}

fn single_expert(cfg: &ExperimentConfig, spec: &ModelSpec, train: &TrainConfig, data: &Split) -> CliResult<Network<f64>> {
    let mut m = Network::new_convex(spec.clone(), derive_seed(cfg.seed, stream::SINGLE), cfg.ioc.policy.clone())?;
    let tc = TrainConfig {
        constraint: Some(cfg.ioc.policy.clone()),
        seed: derive_seed(cfg.seed, stream::SINGLE + 1),
        ..train.clone()
    };
    fit(&mut m, &data.train.to_batch(), None, &tc)?;
    Ok(m)
}

pub fn run_moe(cfg: &ExperimentConfig, out: &Out) -> CliResult<EnsembleSummary> {
    let ExperimentKind::Moe {
        experts,
        expert_model,
        gate_hidden,
        moe,
    } = &cfg.experiment
    else {
        return Err(CliError::Config("not a moe experiment".into()));
    };
    out.write("config.json", &cfg.to_json()?)?;
    let data = prepare_data(cfg)?;
    let spec = expert_model.clone().unwrap_or_else(|| cfg.model.clone());
    let gate = default_gate(data.train.dim(), *gate_hidden, *experts);
    let mc = iocnn::ensemble::MoeConfig {
        policy: cfg.ioc.policy.clone(),
        seed: derive_seed(cfg.seed, stream::ENSEMBLE),
        ..moe.clone()
    };
    let specs = vec![spec.clone(); *experts];
    let outcome = moe_em_fit(&specs, &gate, &data.train.to_batch(), &mc).context(|| "mixture training".to_string())?;
    // Same total budget as one expert sees across all rounds.
    let budget = TrainConfig {
        max_epochs: mc.expert_train.max_epochs * mc.rounds.max(1),
        ..mc.expert_train.clone()
    };
    let single = single_expert(cfg, &spec, &budget, &data)?;
    finish_ensemble(cfg, out, &data, &outcome.ensemble, &single, outcome.events)
}

pub fn run_boost(cfg: &ExperimentConfig, out: &Out) -> CliResult<EnsembleSummary> {
    let ExperimentKind::Boost {
        experts,
        expert_model,
        gate_hidden,
        gate_train,
    } = &cfg.experiment
    else {
        return Err(CliError::Config("not a boost experiment".into()));
    };
    out.write("config.json", &cfg.to_json()?)?;
    let data = prepare_data(cfg)?;
    let spec = expert_model.clone().unwrap_or_else(|| cfg.model.clone());
    let tb = data.train.to_batch();
    let inner = cfg.ioc_train();
    let b = boost_fit(&spec, &tb, *experts, &inner, &cfg.ioc.policy, derive_seed(cfg.seed, stream::ENSEMBLE))
        .context(|| "boosting".to_string())?;
    let mut csv = String::from("sample,weight\n");
    for (i, w) in b.weights.iter().enumerate() {
        writeln!(csv, "{i},{w:.10}").ok();
    }
    out.write("final_weights.csv", &csv)?;
    let gate = if *experts > 1 {
        let gs = default_gate(data.train.dim(), *gate_hidden, *experts);
        let gc = TrainConfig {
            seed: derive_seed(cfg.seed, stream::GATE + 1),
            ..gate_train.clone().unwrap_or_else(|| cfg.train.clone())
        };
        Some(gate_fit(&b.experts, &gs, &tb, &gc, derive_seed(cfg.seed, stream::GATE))?)
    } else {
        None
    };
    let single = b.experts[0].clone();
    let ens = Ensemble::new(EnsembleMode::BoostedGated, b.experts, gate)?;
    finish_ensemble(cfg, out, &data, &ens, &single, b.events)
}

pub fn run_verify(cfg: &ExperimentConfig, out: &Out) -> CliResult<ConvexityReport> {
    out.write("config.json", &cfg.to_json()?)?;
    let data = prepare_data(cfg)?;
    let model = match &cfg.experiment {
        ExperimentKind::Verify { model_path: Some(p) } => load_model(p)?,
        _ => {
            let v = variants(cfg)?;
            let r = run_variant(
                "ioc",
                &v.ioc,
                Some(&cfg.ioc.policy),
                &cfg.ioc_train(),
                derive_seed(cfg.seed, stream::INIT_IOC),
                derive_seed(cfg.seed, stream::TRAIN_IOC),
                &data,
                0.0,
            )?;
            out.write("ioc_history.csv", &r.history.to_csv())?;
            save_model(&r.model, out.path("ioc.iocnn"))?;
            r.model
        }
    };
    let report = certify(&model, &data.train, cfg, 0)?;
    out.json("convexity.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub model: String,
    pub test_acc: f64,
    pub ece: f64,
    pub bins: ReliabilityBins,
}

pub fn run_calibrate(cfg: &ExperimentConfig, out: &Out, n_bins: usize) -> CliResult<Vec<CalibrationRow>> {
    out.write("config.json", &cfg.to_json()?)?;
    let data = prepare_data(cfg)?;
    let (base, ioc) = train_pair(cfg, &data, 0.0, 0)?;
    let test: Batch<f64> = data.test.to_batch();
    let mut rows = Vec::new();
    let mut csv = String::from("model,test_acc,ece\n");
    for r in [&base, &ioc] {
        save_model(&r.model, out.path(&format!("{}.iocnn", r.name)))?;
        out.write(&format!("{}_history.csv", r.name), &r.history.to_csv())?;
        let z = r.model.logits(test.inputs())?;
        let probs = class_probabilities(z.view(), r.model.spec().final_map);
        let (conf, ok) = confidence_and_correct(probs.view(), &test.labels);
        let (e, bins) = ece(&conf, &ok, n_bins)?;
        let acc = ok.iter().filter(|&&o| o).count() as f64 / ok.len() as f64;
        out.write(&format!("reliability_{}.csv", r.name), &bins.to_csv())?;
        emit_svg(
            PlotKind::ReliabilityDiagram,
            &PlotData::Reliability {
                title: format!("{} reliability (ece {e:.4})", r.name),
                bins: &bins,
            },
            out.path(&format!("reliability_{}.svg", r.name)),
        )?;
        writeln!(csv, "{},{acc:.6},{e:.6}", r.name).ok();
        rows.push(CalibrationRow {
            model: r.name.clone(),
            test_acc: acc,
            ece: e,
            bins,
        });
    }
    out.write("calibration.csv", &csv)?;
    out.json("calibration.json", &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Compare(Box<CompareOutcome>),
    Sweep(Vec<RunReport>),
    Ensemble(EnsembleSummary),
    Verify(ConvexityReport),
    Calibrate(Vec<CalibrationRow>),
}

impl Outcome {
    /// Whether the experiment's own checks passed (certification for `verify`).
    pub fn ok(&self) -> bool {
        match self {
            Outcome::Verify(r) => r.certified(),
            _ => true,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Outcome::Compare(c) => {
                let mut s = String::new();
                for r in [&c.baseline.convergence, &c.ioc.convergence] {
                    writeln!(
                        s,
                        "{:<9} train {:.4} test {:.4} gap {:+.4} ({} epochs)",
                        r.model, r.train_acc, r.test_acc, r.gen_gap, r.epochs
                    )
                    .ok();
                }
                write!(s, "convexity: {}", c.convexity.summary()).ok();
                s
            }
            Outcome::Sweep(rows) => {
                let mut s = String::new();
                for r in rows.iter().filter(|r| r.snapshot == Snapshot::Convergence) {
                    writeln!(
                        s,
                        "p={:.2} {:<9} {CONVERGENCE}: train {:.4} test {:.4} gap {:+.4}",
                        r.noise_fraction, r.model, r.train_acc, r.test_acc, r.gen_gap
                    )
                    .ok();
                }
                s.trim_end().to_string()
            }
            Outcome::Ensemble(e) => format!(
                "{:?} p={}: single {:.4}/{:.4} gate {:.4}/{:.4} oracle {:.4}/{:.4} (train/test); experts certified: {:?}",
                e.mode,
                e.p,
                e.single_train_acc,
                e.single_test_acc,
                e.ensemble_train_acc,
                e.ensemble_test_acc,
                e.oracle_train_acc,
                e.oracle_test_acc,
                e.experts_certified
            ),
            Outcome::Verify(r) => {
                format!(
                    "{}\nworst triple: x1={:?} x2={:?}",
                    r.summary(),
                    r.worst_triple.x1,
                    r.worst_triple.x2
                )
            }
            Outcome::Calibrate(rows) => rows
                .iter()
                .map(|r| format!("{:<9} test {:.4} ece {:.4}", r.model, r.test_acc, r.ece))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// Validates `cfg`, creates `out_dir` and runs the configured experiment.
pub fn run(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> CliResult<Outcome> {
    cfg.validate()?;
    let out = Out::create(out_dir)?;
    let verb = cfg.experiment.verb();
    let ctx = || format!("{verb} experiment");
    Ok(match &cfg.experiment {
        ExperimentKind::Compare => Outcome::Compare(Box::new(run_compare(cfg, &out).context(ctx)?)),
        ExperimentKind::NoiseSweep { fractions } => Outcome::Sweep(run_noise_sweep(cfg, &out, fractions).context(ctx)?),
        ExperimentKind::Moe { .. } => Outcome::Ensemble(run_moe(cfg, &out).context(ctx)?),
        ExperimentKind::Boost { .. } => Outcome::Ensemble(run_boost(cfg, &out).context(ctx)?),
        ExperimentKind::Verify { .. } => Outcome::Verify(run_verify(cfg, &out).context(ctx)?),
        ExperimentKind::Calibrate { n_bins } => Outcome::Calibrate(run_calibrate(cfg, &out, *n_bins).context(ctx)?),
    })
}
