//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Failing criteria are reported,
//! not hidden; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use iocnn::constraints::{audit_nonnegativity, build_mask, project, project_tensor, ConstraintPolicy, ProjectionStrategy};
use iocnn::data::{gen_disk_ring, load_idx};
use iocnn::metrics::ece;
use iocnn::net::{
    argmax, load_model, sigmoid, softmax, ActivationKind, FinalMap, LayerSpec, Mode, ModelSpec, Network,
};
use iocnn::train::{evaluate, fit, LossKind, TrainConfig};
use iocnn::verify::{
    boundary_extract, gradient_check, identity_fit_probe, jensen_check, midpoint_convexity, structural_audit,
    BoxSampler, GridSpec, ProbeBudget,
};
use iocnn_cli::config::ExperimentConfig;
use iocnn_cli::experiments::{run, Outcome};
use iocnn::metrics::Snapshot;
use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(repo().join("configs").join(name)).expect("config loads")
}

fn run_in_tmp(cfg: &ExperimentConfig) -> (tempfile::TempDir, Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let out = run(cfg, dir.path().join("out")).expect("experiment runs");
    (dir, out)
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Random convex architecture mixing dense, conv, maxpool, batchnorm and skips.
fn random_convex_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let act = LayerSpec::act(if rng.random_bool(0.5) {
        ActivationKind::Elu
    } else {
        ActivationKind::LeakyRelu
    });
    let outputs = rng.random_range(1..4);
    let bn = rng.random_bool(0.5);
    let mut layers = Vec::new();
    let input_shape = if rng.random_bool(0.5) {
        let f = rng.random_range(2..4);
        let conv = LayerSpec::Conv2d {
            filters: f,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        layers.extend([conv.clone(), act.clone()]);
        let first_act = layers.len();
        layers.push(conv);
        if bn {
            layers.push(LayerSpec::Batchnorm);
        }
        layers.extend([act.clone(), LayerSpec::SkipAdd { from: first_act }]);
        layers.push(LayerSpec::Maxpool { size: 2, stride: None });
        layers.extend([LayerSpec::dense(rng.random_range(3..7)), act.clone()]);
        vec![rng.random_range(1..3), 6, 6]
    } else {
        let h = rng.random_range(3..9);
        layers.extend([LayerSpec::dense(h), act.clone()]);
        let first_act = layers.len();
        layers.push(LayerSpec::dense(h));
        if bn {
            layers.push(LayerSpec::Batchnorm);
        }
        layers.extend([act.clone(), LayerSpec::SkipAdd { from: first_act }]);
        if rng.random_bool(0.5) {
            layers.extend([LayerSpec::dense(h), act.clone()]);
        }
        vec![rng.random_range(2..7)]
    };
    layers.push(LayerSpec::dense(outputs));
    ModelSpec {
        input_shape,
        layers,
        num_outputs: outputs,
        final_map: if outputs == 1 { FinalMap::Sigmoid } else { FinalMap::Softmax },
    }
}

/// Perturbs every parameter and running statistic, then projects.
fn random_convex_model(seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_convex_spec(&mut rng);
    let policy = ConstraintPolicy::strict();
    let mut net = Network::<f64>::new_convex(spec, seed, policy.clone()).unwrap();
    for (_, v) in net.params_mut() {
        v.mapv_inplace(|w| w + rng.random_range(-0.5..0.5));
    }
    let bn: Vec<usize> = net
        .layers()
        .iter()
        .filter(|l| matches!(l.spec, LayerSpec::Batchnorm))
        .filter_map(|l| l.ordinal)
        .collect();
    for ord in bn {
        let s = net.running_stats_mut(ord).unwrap();
        s.mean.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        s.var.mapv_inplace(|_| rng.random_range(0.2..3.0));
    }
    let mask = build_mask(&net, &policy);
    project(&mut net, &mask, &policy);
    net
}

fn c1_convexity_by_construction() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut caught = 0;
    for seed in 0..20u64 {
        let net = random_convex_model(seed);
        let d = net.spec().input_len();
        let report = jensen_check(&net, &BoxSampler::cube(d, -3.0, 3.0), 10_000, 1e-9, seed).unwrap();
        worst = worst.max(report.max_violation);
        if !report.certified() {
            failures.push(seed);
        }
        let mut broken = net.clone();
        let target = broken.constraint_mask()[0];
        broken.param_mut(target).unwrap().as_slice_memory_order_mut().unwrap()[0] = -1.0;
        if !structural_audit(&broken).pass {
            caught += 1;
        }
    }
    verdict(
        failures.is_empty() && caught == 20,
        format!("20 models, max violation {worst:.3e} (tol 1e-9), uncertified {failures:?}, injections caught {caught}/20"),
    )
}

fn c2_projection_semantics() -> Verdict {
    let mut t = ArrayD::from_shape_vec(IxDyn(&[1]), vec![-0.3f64]).unwrap();
    project_tensor(&mut t, ProjectionStrategy::Exponentiate, 5.0);
    let got = t[[0]];
    // e^-5.3 to 22 significant digits, computed independently at 40 digits.
    #[allow(clippy::excessive_precision)]
    let reference = 0.004_991_593_906_910_216_212_287_f64;
    let ulps = (got.to_bits() as i64 - reference.to_bits() as i64).abs();
    let mut ok = got == (-5.3f64).exp() && ulps <= 1;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in ProjectionStrategy::ALL {
        for seed in 0..5 {
            let spec = ModelSpec::mlp(3, &[6, 5], 2, ActivationKind::Elu, true, FinalMap::Softmax);
            let mut net = Network::<f64>::new(spec, seed).unwrap();
            for (_, v) in net.params_mut() {
                v.mapv_inplace(|w| w + rng.random_range(-1.0..0.5));
            }
            let policy = ConstraintPolicy::strict().with_strategy(s);
            let mask = build_mask(&net, &policy);
            project(&mut net, &mask, &policy);
            ok &= audit_nonnegativity(&net, &mask).is_empty();
            if s != ProjectionStrategy::Shift {
                let once = net.clone();
                project(&mut net, &mask, &policy);
                ok &= net == once;
            }
        }
    }
    verdict(ok, format!("exp(-0.3 - 5) = {got:e} ({ulps} ulp from reference); audits empty; clip/abs/exp idempotent"))
}

fn c3_gradients() -> Verdict {
    let mlp = ModelSpec::mlp(4, &[6, 5], 3, ActivationKind::Elu, false, FinalMap::Softmax);
    let conv = ModelSpec {
        input_shape: vec![2, 6, 6],
        layers: vec![
            LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::Conv2d { filters: 2, kernel: 3, stride: 1, padding: 0 },
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::dense(3),
        ],
        num_outputs: 3,
        final_map: FinalMap::Softmax,
    };
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for spec in [mlp, conv] {
        for seed in 0..5 {
            let net = Network::<f64>::new(spec.clone(), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = uniform(5, spec.input_len(), &mut rng);
            let d = uniform(5, spec.num_outputs, &mut rng);
            let r = gradient_check(&net, x.view(), d.view(), Mode::Train, 1e-4, 1e-6).unwrap();
            worst = worst.max(r.max_rel_err);
            entries += r.entries;
        }
    }
    verdict(worst < 1e-4, format!("{entries} entries, max relative error {worst:.2e} (< 1e-4)"))
}

fn c4_argmax_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut bad_softmax, mut bad_sigmoid) = (0, 0);
    let rows = 100_000;
    for i in 0..rows {
        let width = 2 + i % 9;
        let z = Array2::from_shape_fn((1, width), |_| rng.random_range(-20.0..20.0));
        if argmax(z.row(0)) != argmax(softmax(z.view()).row(0)) {
            bad_softmax += 1;
        }
        let s: f64 = if i == 0 { 0.0 } else { rng.random_range(-20.0..20.0) };
        // sigma^-1(0.5) = 0.
        if (sigmoid(s) >= 0.5) != (s >= 0.0) {
            bad_sigmoid += 1;
        }
    }
    verdict(
        bad_softmax == 0 && bad_sigmoid == 0,
        format!("{rows} rows: softmax mismatches {bad_softmax}, sigmoid-threshold mismatches {bad_sigmoid}"),
    )
}

fn c5_identity_probe() -> Verdict {
    let budget = ProbeBudget::default();
    let elu = identity_fit_probe(ActivationKind::Elu, 32, &budget).unwrap();
    let relu = identity_fit_probe(ActivationKind::Relu, 32, &budget).unwrap();
    verdict(
        elu <= 1e-3 && relu >= 10.0 * elu,
        format!("elu mse {elu:.3e} (<= 1e-3), relu mse {relu:.3e} = {:.2}x elu (>= 10x)", relu / elu),
    )
}

fn c6_random_labels() -> Verdict {
    let cfg = config("mnist_random_labels.json");
    let (_dir, out) = run_in_tmp(&cfg);
    let Outcome::Sweep(rows) = out else { unreachable!() };
    let conv = |m: &str| {
        rows.iter()
            .find(|r| r.model == m && r.noise_fraction == 1.0 && r.snapshot == Snapshot::Convergence)
            .expect("row present")
            .clone()
    };
    let (b, i) = (conv("baseline"), conv("ioc"));
    let chance = 0.5;
    verdict(
        b.train_acc >= 0.95 && i.train_acc <= chance + 0.15 && i.gen_gap.abs() <= 0.15,
        format!(
            "baseline train {:.3} (>= 0.95); ioc train {:.3} (<= {:.2}), ioc gap {:+.3} (|gap| <= 0.15); epochs {}/{}",
            b.train_acc,
            i.train_acc,
            chance + 0.15,
            i.gen_gap,
            b.epochs,
            i.epochs
        ),
    )
}

fn c7_generalization_direction() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["disk_ring_compare.json", "mnist_compare.json"] {
        for seed in 1..=3 {
            let mut cfg = config(name);
            cfg.seed = seed;
            let (_dir, out) = run_in_tmp(&cfg);
            let Outcome::Compare(c) = out else { unreachable!() };
            let (b, i) = (c.baseline.convergence.gen_gap, c.ioc.convergence.gen_gap);
            ok &= i <= b;
            parts.push(format!("{}#{seed} ioc {i:+.3} vs {b:+.3}", name.trim_end_matches("_compare.json")));
        }
    }
    verdict(ok, parts.join(", "))
}

fn c8_boundary_geometry() -> Verdict {
    let data = gen_disk_ring(1000, 8);
    let train = data.to_batch::<f64>();
    let grid = GridSpec::square(-3.0, 3.0, 121);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 300,
        seed: 8,
        ..TrainConfig::default()
    };
    let single = ModelSpec::mlp(2, &[32, 32], 1, ActivationKind::Elu, false, FinalMap::Sigmoid);
    let mut m1 = Network::<f64>::new_convex(single, 8, ConstraintPolicy::strict()).unwrap();
    fit(&mut m1, &train, None, &cfg).unwrap();
    let (_, acc1) = evaluate(&m1, &train, LossKind::BinaryCrossEntropy).unwrap();
    // Label 0 is the sublevel set {f < 0} of the single convex logit.
    let g1 = boundary_extract(&m1, grid).unwrap();
    let sub = midpoint_convexity(&g1.labels, 0, 3);

    let two = ModelSpec::mlp(2, &[32, 32], 2, ActivationKind::Elu, false, FinalMap::Softmax);
    let mut m2 = Network::<f64>::new_convex(two, 8, ConstraintPolicy::strict()).unwrap();
    fit(&mut m2, &train, None, &cfg).unwrap();
    let (_, acc2) = evaluate(&m2, &train, LossKind::CrossEntropy).unwrap();
    let g2 = boundary_extract(&m2, grid).unwrap();
    let ring = midpoint_convexity(&g2.labels, 1, 3);
    verdict(
        sub.convex() && sub.pairs_tested > 0 && acc2 >= 0.95 && !ring.convex(),
        format!(
            "single-output: train {acc1:.3}, convex region passes ({} pairs); two-output: train {acc2:.3} (>= 0.95), class-1 region non-convex (counterexample {:?})",
            sub.pairs_tested, ring.counterexample
        ),
    )
}

fn c9_ensembles() -> Verdict {
    let cfg = config("vshape_moe.json");
    let (_dir, out) = run_in_tmp(&cfg);
    let Outcome::Ensemble(e) = out else { unreachable!() };
    let all_convex = e.experts_certified.iter().all(|&c| c);
    let oracle_ge_gate = e.oracle_train_acc >= e.ensemble_train_acc && e.oracle_test_acc >= e.ensemble_test_acc;
    let gate_ge_single = e.ensemble_train_acc >= e.single_train_acc;
    verdict(
        e.ensemble_train_acc >= 0.95 && all_convex && oracle_ge_gate && gate_ge_single,
        format!(
            "{} experts: train oracle {:.4} >= gate {:.4} >= single {:.4}; test oracle {:.4} / gate {:.4}; experts convex {all_convex} (max violation {:.2e})",
            e.p,
            e.oracle_train_acc,
            e.ensemble_train_acc,
            e.single_train_acc,
            e.oracle_test_acc,
            e.ensemble_test_acc,
            e.max_expert_violation
        ),
    )
}

fn c10_calibration() -> Verdict {
    let mut conf = vec![0.9; 10];
    conf.extend([0.6; 10]);
    let mut ok = vec![true; 10];
    ok.extend((0..10).map(|i| i % 2 == 0));
    let (e, bins) = ece(&conf, &ok, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..=1.0)).collect();
    let k: Vec<bool> = (0..5000).map(|_| rng.random_bool(0.7)).collect();
    let (_, big) = ece(&c, &k, 15).unwrap();
    verdict(
        (e - 0.10).abs() <= 1e-12 && bins.total() == 20 && big.total() == 5000,
        format!("fixture ece {e:.15} (0.10 +- 1e-12), bins hold {}/20 and {}/5000", bins.total(), big.total()),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "iocnn" || x == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn c11_determinism() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["disk_ring_compare.json", "vshape_moe.json", "disk_ring_boost.json"] {
        let cfg = config(name);
        let (a, _) = run_in_tmp(&cfg);
        let (b, out) = run_in_tmp(&cfg);
        let fa = csv_files(&a.path().join("out"));
        let fb = csv_files(&b.path().join("out"));
        let same = !fa.is_empty() && fa == fb;
        ok &= same;
        notes.push(format!("{name}: {} artifacts identical={same}", fa.len()));
        if let Outcome::Compare(c) = out {
            let back: Network<f64> = load_model(b.path().join("out/ioc.iocnn")).unwrap();
            let rt = back == c.ioc.model;
            ok &= rt;
            notes.push(format!("model round trip identical={rt}"));
        }
    }
    // An MNIST-backed config resolves its data paths relative to the file.
    let d = load_idx(repo().join("data/mnist5k/images-idx3-ubyte.gz"), repo().join("data/mnist5k/labels-idx1-ubyte.gz")).unwrap();
    ok &= d.len() == 5000;
    verdict(ok, notes.join("; "))
}

fn main() {
    // Present for `cargo test -- --list` and friends.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [Criterion; 11] = [
        ("convexity by construction", c1_convexity_by_construction),
        ("projection semantics", c2_projection_semantics),
        ("gradient correctness", c3_gradients),
        ("argmax invariance", c4_argmax_invariance),
        ("identity-mapping probe", c5_identity_probe),
        ("random-label resistance", c6_random_labels),
        ("generalization direction", c7_generalization_direction),
        ("boundary geometry", c8_boundary_geometry),
        ("ensembles", c9_ensembles),
        ("calibration plumbing", c10_calibration),
        ("determinism and persistence", c11_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        failed += usize::from(!v.pass);
        println!(
            "{} {:>2} {name} [{:.1}s]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
