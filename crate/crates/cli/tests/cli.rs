use dualdn_core::dataio::{read_png8, read_raw, save_weights, write_raw};
use dualdn_core::diffisp::IspParams;
use dualdn_core::nets::{Fusion, ModelBundle, ModelKind, NetConfig};
use dualdn_core::rawmodel::RawImage;
use dualdn_core::Array;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dualdn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualdn")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, iters: usize) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{"schema_version": 1,
            "train": {{"iters": {iters}, "batch": 2, "patch": 16, "milestones": [], "checkpoint_every": 0}},
            "net": {{"depth": 2, "width": 8, "kernel": 3}},
            "data": {{"train_manifest": "train.json", "test_manifest": "test.json",
                     "gen": {{"train_count": 3, "test_count": 2, "size": 24, "seed": 5}}}},
            "outputs": {{"out_dir": "run", "eval_csv": "eval.csv"}}}}"#
    );
    let path = dir.join("exp.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn unknown_flags_are_usage_errors() {
    let o = dualdn(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert_eq!(dualdn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dualdn(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_train_eval_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3);
    let o = dualdn(&["gen", "--config", s(&cfg), "--count", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("4 train and 2 test"));
    assert!(dir.path().join("scenes").join("train_0003.rawbin").is_file());

    let o = dualdn(&["--sequential", "train", "--config", s(&cfg), "--progress", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let weights = dir.path().join("run").join("final.wbin");
    assert!(weights.is_file());
    assert!(dir.path().join("run").join("metrics.csv").is_file());

    let fresh = dir.path().join("fresh.wbin");
    let b = ModelBundle::new(ModelKind::Dual, &NetConfig::default(), Fusion::Gated, 3).unwrap();
    save_weights(&fresh, &b).unwrap();
    let csv = dir.path().join("cmp.csv");
    let o = dualdn(&["eval", "--config", s(&cfg), "--weights", s(&fresh), "--weights", s(&weights), "--alpha", "0.5", "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let mean = |method: &str| {
        let v: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == method)
            .map(|f| f[5].parse().unwrap())
            .collect();
        assert_eq!(v.len(), 2);
        v.iter().sum::<f64>() / 2.0
    };
    assert!((mean("dual") - mean("noisy")).abs() < 0.01);
    assert!(mean("final").is_finite());

    let scene = dir.path().join("scenes").join("test_0000.rawbin");
    let out = dir.path().join("den.png");
    let inter = dir.path().join("den_raw.rawbin");
    let o = dualdn(&["infer", "--raw", s(&scene), "--weights", s(&weights), "--out", s(&out), "--save-intermediate-raw", s(&inter)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let png = read_png8(&out).unwrap();
    let raw = read_raw(&inter).unwrap();
    assert_eq!(png.shape()[1..], [raw.height(), raw.width()]);
}

#[test]
fn overlapping_splits_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    assert!(dualdn(&["gen", "--config", s(&cfg)]).status.success());
    fs::copy(dir.path().join("train.json"), dir.path().join("test.json")).unwrap();
    let o = dualdn(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[data]:"), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn render_keeps_gray_gray() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("gray.rawbin");
    let img = RawImage::new(Array::filled([16, 20], 0.25), IspParams::identity()).unwrap();
    write_raw(&raw, &img).unwrap();
    for extra in [&[][..], &["--demosaic", "bilinear"][..], &["--sharpen"][..], &["--clahe"][..]] {
        let out = dir.path().join("gray.ppm");
        let mut args = vec!["render", "--raw", s(&raw), "--alpha", "0", "--out", s(&out)];
        args.extend_from_slice(extra);
        let o = dualdn(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let px = read_png8(&out).unwrap();
        assert_eq!(px.shape(), [3, 16, 20]);
        assert!(px.data().iter().all(|&v| v == px.data()[0]), "{extra:?}");
    }
    let o = dualdn(&["render", "--raw", s(&raw), "--alpha", "2", "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[parameter]:"));
    let o = dualdn(&["render", "--raw", "/nonexistent/x.rawbin", "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_reports_each_stage() {
    let o = dualdn(&["gradcheck", "--stage", "white_balance", "--seed", "1", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("ok")).count(), 2);
    let o = dualdn(&["gradcheck", "--stage", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
