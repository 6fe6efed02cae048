use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn epca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epca"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
[data]
image_size = 32
synth_train_per_class = 16
synth_test_per_class = 0

[attention]
kind = epca
sizes = 1,3

[train]
lr_max = 0.05
batch_size = 8
epochs = 20
t0 = 20
val_fraction = 0
hflip = false
rotation_deg = 0
out_dir = out
";

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = epca(dir.path(), &["bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    let o = epca(dir.path(), &["summary", "--config", "x.cfg", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(epca(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = epca(dir.path(), &["summary", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(dir.path().join("bad.cfg"), "[train]\nepochs = 2\nlearning_rate = 1\n").unwrap();
    let o = epca(dir.path(), &["summary", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("run-manifest.json")).unwrap();
    assert!(manifest.contains("\"failed\""));
}

#[test]
fn summary_counts_ninety_attention_params() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), TINY).unwrap();
    let o = epca(dir.path(), &["summary", "--config", "run.cfg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("params attention  90 "), "{}", stdout(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "summary");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = epca(dir.path(), &["gradcheck", "--tol", "1e-4", "--seeds", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(!out.contains("FAIL"));
    for case in ["conv2d", "max_pool2d", "epca_linear", "epca_dropout_eval", "epca_hierarchical", "epca_parallel", "se", "table2_cic"] {
        assert!(out.lines().any(|l| l.starts_with(case)), "missing {case}:\n{out}");
    }
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = epca(dir.path(), &["synth", "--out", out, "--n", "6", "--seed", "3"]);
        assert!(o.status.success());
    }
    let labels = fs::read_to_string(dir.path().join("a/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 7);
    assert_eq!(labels, fs::read_to_string(dir.path().join("b/labels.csv")).unwrap());
    for line in labels.lines().skip(1) {
        let name = line.split(',').next().unwrap();
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    assert!(dir.path().join("a/run-manifest.json").exists());
}

#[test]
fn train_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("run.cfg"), TINY).unwrap();
    let o = epca(p, &["train", "--config", "run.cfg", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["history.csv", "last.epck", "run.cfg", "report.csv", "run-manifest.json"] {
        assert!(p.join("out").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("out/run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);

    // one full annealing cycle fits the 48 training images; with no test
    // split, eval scores those same images
    let o = epca(p, &["eval", "--config", "run.cfg", "--ckpt", "out/last.epck", "--out", "eval.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ACC    1.0000"), "{}", stdout(&o));

    let o = epca(p, &["synth", "--out", "imgs", "--n", "6", "--seed", "9"]);
    assert!(o.status.success());
    let o = epca(
        p,
        &["gradcam", "--ckpt", "out/last.epck", "--image", "imgs/000002.pgm", "--class", "2", "--layer", "stage2.block1", "--out", "hm.pgm"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pgm = fs::read(p.join("hm.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    assert_eq!(fs::read_to_string(p.join("hm.csv")).unwrap().lines().count(), 32);

    let o = epca(
        p,
        &["gradcam", "--ckpt", "out/last.epck", "--image", "imgs/000002.pgm", "--class", "2", "--layer", "nowhere"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown layer"));

    let o = epca(p, &["export-stats", "--ckpt", "out/last.epck", "--data", "imgs", "--out", "stats"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in ["low", "mid", "high"] {
        let csv = fs::read_to_string(p.join(format!("stats/stats_{stage}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "stage,feature_index,mean,std,q25,q50,q75,normalized_mean");
        assert_eq!(csv.lines().count(), 11);
        let contrib = fs::read_to_string(p.join(format!("stats/contrib_{stage}.csv"))).unwrap();
        assert_eq!(contrib.lines().next().unwrap().split(',').count(), 10);
    }
}
