use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCENARIO: &str = "\
carrier_ghz = 3.5
num_rb_time = 8
delta_t_ms = 1
num_rb_freq = 8
delta_f_khz = 180
upa_h = 2
upa_v = 2
speed_min_kmh = 0
speed_max_kmh = 10
";

fn wifo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wifo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wifo(args);
    assert!(
        out.status.success(),
        "wifo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn generate(dir: &Path, cfg: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&["--seed", &seed.to_string(), "generate", "--config", s(cfg), "--out", s(&out), "--samples", &n.to_string()]);
    out
}

#[test]
fn generate_writes_header_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SCENARIO);
    let a = generate(dir.path(), &cfg, "a.wfo", 4, 9);
    let b = generate(dir.path(), &cfg, "b.wfo", 4, 9);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], b"WFO1");
    let dims: Vec<u32> = (0..4).map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap())).collect();
    assert_eq!(dims, vec![8, 8, 4, 4]);
    assert_eq!(bytes, fs::read(&b).unwrap());

    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.wfo.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seeds"]["scenario"], 9);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["stats"]["std"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), &SCENARIO.replace("delta_f_khz = 180\n", ""));
    let out = wifo(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("x.wfo")), "--samples", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_f_khz"));
    assert!(!dir.path().join("x.wfo").exists());
}

#[test]
fn pretrain_step_count_and_reproducible_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SCENARIO);
    let data = generate(dir.path(), &cfg, "d.wfo", 16, 1);
    let run = |name: &str| {
        let ckpt = dir.path().join(name);
        ok(&[
            "--threads", "1", "--seed", "5", "pretrain", "--data", s(&data), "--model", "tiny", "--epochs", "2",
            "--batch-size", "6", "--out", s(&ckpt),
        ]);
        let mut log = ckpt.clone().into_os_string();
        log.push(".losses.jsonl");
        (fs::read(&ckpt).unwrap(), fs::read_to_string(PathBuf::from(log)).unwrap())
    };
    let (ck_a, log_a) = run("a.ck");
    let (ck_b, log_b) = run("b.ck");
    // 2 epochs x ceil(16 / 6) batches.
    assert_eq!(log_a.lines().count(), 6);
    assert_eq!(log_a, log_b);
    assert_eq!(ck_a, ck_b);
    let first: Value = serde_json::from_str(log_a.lines().next().unwrap()).unwrap();
    for key in ["epoch", "batch", "dataset_id", "random", "time", "frequency", "mean", "lr"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn evaluate_defaults_to_half_split_and_zero_baseline_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        &SCENARIO.replace("num_rb_time = 8", "num_rb_time = 16").replace("num_rb_freq = 8", "num_rb_freq = 16"),
    );
    let data = generate(dir.path(), &cfg, "d.wfo", 3, 2);
    let ckpt = dir.path().join("m.ck");
    ok(&["pretrain", "--data", s(&data), "--model", "tiny", "--epochs", "1", "--batch-size", "3", "--out", s(&ckpt)]);
    let report = dir.path().join("r.json");
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--report", s(&report)]);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["task"]["axis"], "time");
    assert_eq!(reports[0]["task"]["known"], 8);
    assert_eq!(reports[1]["task"]["axis"], "frequency");
    assert_eq!(reports[1]["task"]["known"], 8);
    for r in reports {
        assert!((r["nmse_zero"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    }

    let bad = wifo(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--report", s(&report), "--known", "6"]);
    assert_eq!(bad.status.code(), Some(2));

    let pred = dir.path().join("p.wfo");
    ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--task", "time", "--out", s(&pred)]);
    let bytes = fs::read(&pred).unwrap();
    let dims: Vec<u32> = (0..4).map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap())).collect();
    assert_eq!(dims, vec![8, 16, 4, 3]);
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let good = ok(&["gradcheck"]);
    assert!(String::from_utf8_lossy(&good.stdout).contains("PASS"));
    let bad = wifo(&["gradcheck", "--corrupt", "enc.0.attn.qkv.weight"]);
    assert_eq!(bad.status.code(), Some(3));
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("worst: enc.0.attn.qkv.weight"), "{text}");
}
