use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use icelut::engine::identity_bundle;
use icelut::lutgen::{export_bundle, LutDims, QuantSpec};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn icelut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icelut"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn digest_dir(dir: &Path) -> Vec<u8> {
    let mut files: Vec<PathBuf> = walk(dir);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().to_vec()
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir), "--count", "3", "--size", "16"];
    args.extend_from_slice(extra);
    let out = icelut(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

/// Small, fast training run writing `model.ckpt` under `dir`.
fn train_small(dir: &Path, data: &Path, seed: &str) -> PathBuf {
    let ckpt = dir.join("model.ckpt");
    let out = icelut(&[
        "train",
        "--data",
        p(data),
        "--out",
        p(&ckpt),
        "--epochs",
        "2",
        "--learning-rate",
        "1e-3",
        "--train-resolution",
        "8",
        "--hidden",
        "6,6,6,6,6",
        "--seed",
        seed,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    ckpt
}

#[test]
fn synth_identity_gamma_copies_inputs() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--transform", "gamma:1.0"]);
    for name in ["0000.png", "0001.png", "0002.png"] {
        let a = std::fs::read(tmp.path().join("input").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("target").join(name)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    synth(&a, &["--transform", "channel-mix", "--seed", "5"]);
    synth(&b, &["--transform", "channel-mix", "--seed", "5"]);
    synth(&c, &["--transform", "channel-mix", "--seed", "6"]);
    assert_eq!(digest_dir(&a), digest_dir(&b));
    assert_ne!(digest_dir(&a), digest_dir(&c));
}

#[test]
fn synth_unknown_transform_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = icelut(&["synth", "--out", p(tmp.path()), "--transform", "sepia"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sepia"));
}

#[test]
fn train_is_deterministic_and_writes_loss_csv() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &[]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let ca = train_small(&a, &data, "3");
    let cb = train_small(&b, &data, "3");
    assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());
    let csv = std::fs::read_to_string(a.join("model.loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,l1");
    assert_eq!(lines.len(), 3);
}

#[test]
fn train_error_codes() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &[]);
    let ckpt = tmp.path().join("m.ckpt");
    let out = icelut(&["train", "--data", p(&data), "--out", p(&ckpt), "--epochs", "0"]);
    assert_eq!(code(&out), 2);

    std::fs::remove_dir_all(data.join("target")).unwrap();
    let out = icelut(&["train", "--data", p(&data), "--out", p(&ckpt), "--epochs", "1"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("target"));
}

#[test]
fn config_file_rejects_unknown_keys_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"epoch": 2}}"#).unwrap();
    let out = icelut(&["--config", p(&bad), "synth", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(code(&out), 2);

    let good = tmp.path().join("good.json");
    std::fs::write(&good, r#"{"synth": {"count": 2, "size": 12, "transform": "warm-tone"}}"#).unwrap();
    let out_dir = tmp.path().join("y");
    let out = icelut(&["--config", p(&good), "synth", "--out", p(&out_dir), "--count", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(walk(&out_dir.join("input")).len(), 1);
}

#[test]
fn bake_verify_bench_round_trip() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &[]);
    let ckpt = train_small(tmp.path(), &data, "1");
    let bundle = tmp.path().join("model.lut");

    let out = icelut(&["bake", "--checkpoint", p(&ckpt), "--out", p(&bundle), "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["weight_lut_bytes"], 409_600);

    let wide = tmp.path().join("wide.lut");
    let out = icelut(&[
        "bake", "--checkpoint", p(&ckpt), "--out", p(&wide), "--json", "--delta-s", "4", "--offset", "32",
    ]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["weight_lut_bytes"], 6_553_600);

    let images = data.join("input");
    let out = icelut(&["verify", "--checkpoint", p(&ckpt), "--bundle", p(&bundle), "--images", p(&images)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["within_bounds"], true);

    let out = icelut(&[
        "bench", "--bundle", p(&bundle), "--images", p(&images), "--repeats", "3", "--compare-checkpoint", p(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["speedup"].as_f64().unwrap() > 0.0);

    let out = icelut(&["bench", "--bundle", p(&bundle), "--images", p(&images), "--repeats", "1"]);
    assert_eq!(code(&out), 2);
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = icelut(&["bench", "--bundle", p(&bundle), "--images", p(&empty)]);
    assert_eq!(code(&out), 3);
    let out = icelut(&["verify", "--checkpoint", p(&ckpt), "--bundle", p(&bundle), "--images", p(&empty)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_flags_mismatched_pair() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--transform", "channel-swap"]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let ca = train_small(&a, &data, "1");
    let cb = train_small(&b, &data, "2");
    let bundle = tmp.path().join("b.lut");
    assert_eq!(code(&icelut(&["bake", "--checkpoint", p(&cb), "--out", p(&bundle)])), 0);
    let out = icelut(&[
        "verify", "--checkpoint", p(&ca), "--bundle", p(&bundle), "--images", p(&data.join("input")),
    ]);
    assert_eq!(code(&out), 6);
}

#[test]
fn corrupt_inputs_map_to_their_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let junk = tmp.path().join("junk.bin");
    std::fs::write(&junk, b"definitely not a model").unwrap();
    let out = icelut(&["bake", "--checkpoint", p(&junk), "--out", p(&tmp.path().join("o.lut"))]);
    assert_eq!(code(&out), 4);

    let data = tmp.path().join("data");
    synth(&data, &[]);
    let out = icelut(&[
        "retouch", "--bundle", p(&junk), "--input", p(&data.join("input")), "--out", p(&tmp.path().join("r")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn retouch_identity_bundle_preserves_images_and_skips_bad_files() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &[]);
    let dims = LutDims {
        channels: 10,
        groups: 5,
        group_len: 2,
        basis_luts: 20,
        lattice_bins: 17,
    };
    let bundle = tmp.path().join("id.lut");
    export_bundle(&identity_bundle(dims, QuantSpec::default()).unwrap(), &bundle).unwrap();
    std::fs::write(data.join("input").join("broken.png"), b"not a png").unwrap();

    let out_dir = tmp.path().join("out");
    let out = icelut(&[
        "retouch",
        "--bundle",
        p(&bundle),
        "--input",
        p(&data.join("input")),
        "--out",
        p(&out_dir),
        "--targets",
        p(&data.join("input")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["processed"], 3);
    assert_eq!(summary["failed"][0], "broken.png");
    for name in ["0000.png", "0001.png", "0002.png"] {
        let a = icelut::imaging::load_image(&data.join("input").join(name)).unwrap();
        let b = icelut::imaging::load_image(&out_dir.join(name)).unwrap();
        assert_eq!(a, b);
    }
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("name,psnr,ssim,delta_e"));
    assert!(csv.lines().nth(1).unwrap().contains("inf"));
}

#[test]
fn metrics_on_files_and_directories() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--transform", "gamma:1.0"]);
    let a = data.join("input").join("0000.png");
    let out = icelut(&["metrics", p(&a), p(&a)]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["delta_e"], 0.0);
    assert_eq!(report["ssim"], 1.0);

    let csv = tmp.path().join("m.csv");
    let out = icelut(&["metrics", p(&data.join("input")), p(&data.join("target")), "--csv", p(&csv)]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["images"], 3);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let out = icelut(&["metrics", p(&a), p(&tmp.path().join("missing"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn thread_cap_must_be_positive() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_icelut"))
        .args(["synth", "--out", p(tmp.path()), "--count", "1", "--size", "8"])
        .env("ICELUT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
