use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slamp::data::load_checkpoint;
use slamp::experiment::{build_network, RunConfig};

const CONFIG: &str = r#"{
  "seed": 11,
  "dataset": {"kind": "static", "dims": 12, "classes": 4, "train_per_class": 10,
              "eval_per_class": 5, "noise": 0.2},
  "architecture": {"input": [12], "layers": [
    {"kind": "dense", "out": 14}, {"kind": "dense", "out": 10}, {"kind": "dense", "out": 4}]},
  "train": {"epochs": 3, "batch_size": 8},
  "schedule": {"frequency": 1, "stages": [
    {"kind": "fraction", "fraction": 0.3}, {"kind": "target", "connectivity": 0.2}]},
  "audit": {"fractions": [0.0, 0.3]},
  "sweep": {"frequencies": [1, 2], "learning_rates": [0.01]}
}"#;

fn slamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slamp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = slamp(args);
    assert!(
        out.status.success(),
        "slamp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_all(config: &str, out: &Path) {
    let out = out.to_str().unwrap();
    for cmd in ["train", "prune-loop", "eval", "audit", "sweep"] {
        run_ok(&[cmd, "--config", config, "--out", out]);
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn every_command_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all(&config, &a);
    run_all(&config, &b);
    let fa = files(&a);
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "audit.csv",
            "audit.json",
            "checkpoint.slmp",
            "eval.csv",
            "eval.json",
            "prune_loop.csv",
            "prune_loop.json",
            "pruned.slmp",
            "sweep.csv",
            "sweep.json",
            "train.csv",
            "train.json"
        ]
    );
    assert_eq!(fa, files(&b));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["train", "--config", &config, "--out", a.to_str().unwrap()]);
    run_ok(&["train", "--config", &config, "--out", b.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(fs::read(a.join("checkpoint.slmp")).unwrap(), fs::read(b.join("checkpoint.slmp")).unwrap());
    let csv = fs::read_to_string(a.join("train.csv")).unwrap();
    assert!(csv.starts_with("config_hash,epoch,loss,accuracy\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn zero_epochs_saves_the_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(r#""epochs": 3"#, r#""epochs": 0"#);
    let config = write_config(tmp.path(), &text);
    run_ok(&["train", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    let ckpt = load_checkpoint(tmp.path().join("checkpoint.slmp")).unwrap();
    let (net, _) = ckpt.restore().unwrap();
    let fresh = build_network(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert_eq!(net.layers(), fresh.layers());
}

#[test]
fn explicit_checkpoint_flag_and_stage_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let train_dir = tmp.path().join("train");
    let prune_dir = tmp.path().join("prune");
    run_ok(&["train", "--config", &config, "--out", train_dir.to_str().unwrap()]);
    let ckpt = train_dir.join("checkpoint.slmp");
    run_ok(&[
        "prune-loop",
        "--config",
        &config,
        "--out",
        prune_dir.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    let mut rdr = csv::Reader::from_path(prune_dir.join("prune_loop.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let conn = headers.iter().position(|h| h == "connectivity").unwrap();
    let sops = headers.iter().position(|h| h == "sops").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let values = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i].parse().unwrap()).collect() };
    assert!(values(conn).windows(2).all(|w| w[1] < w[0]));
    assert!(values(sops).windows(2).all(|w| w[1] <= w[0]));

    // The pruned checkpoint evaluates and audits like any other.
    let pruned = prune_dir.join("pruned.slmp");
    run_ok(&["eval", "--config", &config, "--out", prune_dir.to_str().unwrap(), "--checkpoint", pruned.to_str().unwrap()]);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(prune_dir.join("eval.json")).unwrap()).unwrap();
    assert!((eval["result"]["connectivity"].as_f64().unwrap() - 0.2).abs() < 0.01);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), r#"{"seed": 1, "bogus": true}"#);
    let out = slamp(&["train", "--config", &config]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let config = write_config(tmp.path(), CONFIG);
    let out = slamp(&["eval", "--config", &config, "--out", tmp.path().join("empty").to_str().unwrap()]);
    assert!(!out.status.success());

    let out = slamp(&["frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn checkpoint_for_another_architecture_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("run");
    run_ok(&["train", "--config", &config, "--out", dir.to_str().unwrap()]);
    let other = write_config(
        tmp.path(),
        &CONFIG.replace(r#"{"kind": "dense", "out": 14}"#, r#"{"kind": "dense", "out": 13}"#),
    );
    let out = slamp(&["eval", "--config", &other, "--out", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different architecture"));
}
