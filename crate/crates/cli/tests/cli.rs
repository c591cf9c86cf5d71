use std::path::Path;
use std::process::Command;

use iocnn_cli::config::{widen_first_layer, ExperimentConfig};
use iocnn_cli::svg::{render_svg, PlotData, PlotKind, Series};

const BIN: &str = env!("CARGO_BIN_EXE_iocnn");

const TINY: &str = r#"{
  "schema_version": 1,
  "seed": 4,
  "dataset": { "source": { "kind": "disk_ring", "n": 200 } },
  "model": {
    "input_shape": [2],
    "layers": [
      { "kind": "dense", "units": 8 },
      { "kind": "activation", "activation": "elu" },
      { "kind": "dense", "units": 2 }
    ],
    "num_outputs": 2,
    "final_map": "softmax"
  },
  "train": { "learning_rate": 0.01, "max_epochs": 5 },
  "verify": { "triples": 500 },
  "experiment": { "kind": "compare" }
}"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn unknown_keys_and_versions_are_rejected() {
    assert!(ExperimentConfig::from_json(TINY).is_ok());
    let extra = TINY.replacen("\"seed\": 4,", "\"seed\": 4, \"sede\": 1,", 1);
    assert!(ExperimentConfig::from_json(&extra).is_err());
    let v2 = TINY.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert!(ExperimentConfig::from_json(&v2).is_err());
}

#[test]
fn missing_data_files_fail_validation() {
    let text = TINY.replacen(
        r#"{ "kind": "disk_ring", "n": 200 }"#,
        r#"{ "kind": "idx", "images": "nope-images", "labels": "nope-labels" }"#,
        1,
    );
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    assert!(cfg.validate().is_err());
}

#[test]
fn widening_touches_only_the_first_layer() {
    let cfg = ExperimentConfig::from_json(TINY).unwrap();
    let w = widen_first_layer(&cfg.model, 2.0);
    assert_eq!(w.layers[0], iocnn::net::LayerSpec::dense(16));
    assert_eq!(w.layers[2], iocnn::net::LayerSpec::dense(2));
}

#[test]
fn compare_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = |out: &str| {
        let o = Command::new(BIN)
            .args(["compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let stdout = run("a");
    assert!(stdout.contains("convexity: PASS"), "{stdout}");
    run("b");
    for f in ["reports.csv", "baseline_history.csv", "ioc_history.csv", "ioc.iocnn", "boundary_ioc.svg", "loss_curves.svg"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
}

#[test]
fn refuses_non_empty_output_and_mismatched_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let busy = dir.path().join("busy");
    std::fs::create_dir(&busy).unwrap();
    std::fs::write(busy.join("keep"), "x").unwrap();
    let o = Command::new(BIN).args(["compare", "--config"]).arg(&cfg).arg("--out").arg(&busy).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not empty"));
    let o = Command::new(BIN)
        .args(["moe", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`compare`"));
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    for (out, seed) in [("s1", "1"), ("s2", "2")] {
        let o = Command::new(BIN)
            .args(["compare", "--seed", seed, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("s1/ioc.iocnn")).unwrap();
    let b = std::fs::read(dir.path().join("s2/ioc.iocnn")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn svg_rendering_is_deterministic_and_checked() {
    let data = || PlotData::Curves {
        title: "t".into(),
        series: vec![
            Series { name: "a".into(), values: vec![1.0, 0.5, 0.25] },
            Series { name: "b".into(), values: vec![0.9, 0.6, 0.3] },
        ],
    };
    let a = render_svg(PlotKind::LossCurves, &data()).unwrap();
    assert_eq!(a, render_svg(PlotKind::LossCurves, &data()).unwrap());
    assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
    let ragged = PlotData::Curves {
        title: "t".into(),
        series: vec![
            Series { name: "a".into(), values: vec![1.0] },
            Series { name: "b".into(), values: vec![1.0, 2.0] },
        ],
    };
    assert!(render_svg(PlotKind::LossCurves, &ragged).is_err());
}
