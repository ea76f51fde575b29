use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn din(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_din"))
        .args(args)
        .env("DIN_THREADS", "1")
        .output()
        .expect("run din")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().expect("a report line")).expect("JSON report")
}

fn stderr_error(o: &Output) -> Value {
    let v: Value = serde_json::from_slice(&o.stderr).expect("JSON error on stderr");
    v["error"].clone()
}

/// Smooth 32x32 RGB test image as binary PPM.
fn write_test_ppm(path: &Path) {
    let n = 32;
    let mut bytes = format!("P6\n{n} {n}\n255\n").into_bytes();
    for y in 0..n {
        for x in 0..n {
            let (u, v) = (x as f64 / (n - 1) as f64, y as f64 / (n - 1) as f64);
            for c in [u, v, 0.5 + 0.4 * (6.0 * u * v).sin()] {
                bytes.push((c * 255.0).round() as u8);
            }
        }
    }
    fs::write(path, bytes).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_image(dir: &Path, input: &Path, seed: &str) -> (Output, PathBuf) {
    let out = dir.join(format!("run-{seed}"));
    let o = din(&[
        "train-image", "--input", s(input), "--compression", "2", "--rho", "2", "--steps", "200",
        "--lr", "0.01", "--seed", seed, "--out", s(&out),
    ]);
    (o, out)
}

#[test]
fn train_then_eval_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input);
    let (o, out) = train_image(dir.path(), &input, "1");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["task"], "image");
    assert_eq!(report["steps"], 200);
    assert!(report["metrics"]["psnr"].as_f64().unwrap() > 20.0);
    assert!(report["metrics"]["psnr_baseline"].is_number());
    let model = out.join("model.din");
    let bytes = fs::read(&model).unwrap();
    assert_eq!(&bytes[..4], b"DIN1");
    let jsonl = fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 1);

    let decoded = dir.path().join("decoded.ppm");
    let e = din(&["eval-image", "--model", s(&model), "--reference", s(&input), "--decoded", s(&decoded), "--out", s(&out)]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    let eval = stdout_json(&e);
    let (a, b) = (report["metrics"]["psnr"].as_f64().unwrap(), eval["metrics"]["psnr"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    assert_eq!(eval["model_sha256"], report["model_sha256"]);
    assert!(decoded.exists());
    assert_eq!(fs::read_to_string(out.join("report.jsonl")).unwrap().lines().count(), 2);

    let i = din(&["info", s(&model)]);
    assert_eq!(code(&i), 0);
    let info: Value = serde_json::from_slice(&i.stdout).unwrap();
    assert!(info.to_string().contains("triangle"), "{info}");
}

#[test]
fn same_seed_same_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    write_test_ppm(&input);
    let sha = |seed: &str, tag: &str| {
        let sub = dir.path().join(tag);
        fs::create_dir_all(&sub).unwrap();
        let (o, _) = train_image(&sub, &input, seed);
        assert_eq!(code(&o), 0);
        stdout_json(&o)["model_sha256"].as_str().unwrap().to_string()
    };
    let a = sha("5", "a");
    assert_eq!(a, sha("5", "b"));
    assert_ne!(a, sha("6", "c"));
}

#[test]
fn quantized_ggx_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ggx");
    let o = din(&["train-ggx", "--steps", "300", "--quantize", "u8", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["quantized"], true);
    assert_eq!(r["resolutions"]["primaries"], serde_json::json!([[16, 16]]));
    assert!(r["metrics"]["psnr_normalized"].is_number());
    let csv = fs::read_to_string(out.join("ggx_grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        serde_json::json!({"task": "ggx", "seed": 3, "train": {"steps": 50, "batch_size": 64}, "out": out}).to_string(),
    )
    .unwrap();
    let o = din(&["train-ggx", "--config", s(&cfg), "--steps", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["steps"], 20);
    assert_eq!(r["seed"], 3);

    fs::write(&cfg, r#"{"task": "ggx", "learning_rte": 0.1}"#).unwrap();
    let o = din(&["train-ggx", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr_error(&o)["message"].as_str().unwrap().contains("learning_rte"));

    fs::write(&cfg, r#"{"task": "sdf"}"#).unwrap();
    assert_eq!(code(&din(&["train-ggx", "--config", s(&cfg), "--out", s(&out)])), 2);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let o = din(&["train-sdf", "--shape", "sphere", "--budget-bytes", "100", "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert_eq!(stderr_error(&o)["kind"], "infeasible-layout");

    let bad = dir.path().join("bad.din");
    fs::write(&bad, b"NOPE\x01\x00\x00\x00").unwrap();
    let o = din(&["info", s(&bad)]);
    assert_eq!(code(&o), 4);
    let err = stderr_error(&o);
    assert_eq!(err["offset"], 0);

    let ppm = dir.path().join("trunc.ppm");
    fs::write(&ppm, b"P6\n4 4\n255\n\x00\x01").unwrap();
    let o = din(&["train-image", "--input", s(&ppm), "--out", s(&out)]);
    assert_eq!(code(&o), 4);

    assert_eq!(code(&din(&["train-sdf", "--shape", "teapot", "--out", s(&out)])), 2);
    assert_eq!(code(&din(&["train-ggx"])), 2);
    assert_eq!(code(&din(&["no-such-command"])), 2);
    assert_eq!(code(&din(&["--help"])), 0);
    assert_eq!(code(&din(&["info", s(&dir.path().join("missing.din"))])), 4);
}

#[test]
fn sdf_train_eval_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sdf");
    let cfg = dir.path().join("sdf.json");
    fs::write(
        &cfg,
        serde_json::json!({
            "task": "sdf",
            "shape": {"kind": "sphere", "center": [0.5, 0.5, 0.5], "radius": 0.3},
            "budget_bytes": 3 * 16 * 16 * 16 + 8 * 8 * 8,
            "near_samples": 20000,
            "train": {"steps": 200}
        })
        .to_string(),
    )
    .unwrap();
    let o = din(&["train-sdf", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["layout"]["primary_resolution"], 16);
    assert!(r["metrics"]["iou"].as_f64().unwrap() > 0.5);
    assert!(out.join("sdf_eval.csv").exists());

    let model = out.join("model.din");
    let e = din(&["eval-sdf", "--model", s(&model), "--config", s(&cfg)]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    assert_eq!(stdout_json(&e)["metrics"]["iou"], r["metrics"]["iou"]);

    let grid = dir.path().join("grid.bin");
    let x = din(&["export-grid", "--model", s(&model), "--resolution", "9", "--out", s(&grid)]);
    assert_eq!(code(&x), 0, "{}", String::from_utf8_lossy(&x.stderr));
    let bytes = fs::read(&grid).unwrap();
    assert_eq!(bytes.len(), 12 + 729);
    assert_eq!(bytes[12 + 4 + 4 * 9 + 4 * 81], 1);
    assert_eq!(bytes[12], 0);
}
