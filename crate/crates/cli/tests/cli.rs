use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn biolite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biolite"))
        .args(args)
        .env_remove("BIOLITE_OUT_DIR")
        .output()
        .expect("spawn biolite")
}

fn ok(args: &[&str]) -> String {
    let out = biolite(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, size: u32, seed: u64, difficulty: &str) {
    ok(&[
        "synth",
        "--n",
        &n.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        &seed.to_string(),
        "--difficulty",
        difficulty,
        "--out",
        p(dir),
    ]);
}

/// Stderr must be a single `error[category]: ...` line.
fn assert_error(out: &Output, code: i32, category: &str) {
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "stderr: {err}");
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    assert!(lines[0].starts_with(&format!("error[{category}]: ")), "stderr: {err}");
}

#[test]
fn synth_is_deterministic_and_records_the_tier() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 12, 32, 3, "medium");
    synth(&b, 12, 32, 3, "medium");

    assert_eq!(fs::read_dir(a.join("images")).unwrap().count(), 12);
    assert_eq!(fs::read_dir(a.join("masks")).unwrap().count(), 12);
    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert!(manifest.contains("difficulty=medium"), "{manifest}");
    assert_eq!(manifest, fs::read_to_string(b.join("manifest.tsv")).unwrap());
    for name in ["images/frame_0000.png", "masks/frame_0011.png", "scenes.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "ok");
    assert_eq!(run["seed"], 3);
}

#[test]
fn train_eval_infer_describe_round() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth(&data, 12, 32, 1, "easy");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--epochs",
        "2",
        "--image-size",
        "32",
        "--set",
        "plateau_patience=5",
        "--out",
        p(&run),
    ]);
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
    assert!(log.starts_with("epoch,train_loss,val_loss,val_dice,val_miou,lr"));
    let config = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.contains("image_size = 32") && config.contains("plateau_patience = 5"), "{config}");
    let weights = run.join("best.blu");
    assert!(weights.is_file());

    let eval_dir = tmp.path().join("eval");
    let text = ok(&["eval", "--data", p(&data), "--weights", p(&weights), "--per-image", "--out", p(&eval_dir)]);
    assert!(text.contains("split=test") && text.contains("miou=") && text.contains("per_image_dice="), "{text}");
    assert!(eval_dir.join("metrics.csv").is_file());

    let mask = tmp.path().join("mask.png");
    let overlay = tmp.path().join("overlay.png");
    let image = data.join("images").join("frame_0000.png");
    let text = ok(&["infer", "--weights", p(&weights), "--image", p(&image), "--out", p(&mask), "--overlay", p(&overlay)]);
    assert!(text.starts_with("32x32 mask"), "{text}");
    assert!(mask.is_file() && overlay.is_file());
    let explicit = tmp.path().join("explicit.png");
    ok(&["infer", "--weights", p(&weights), "--image", p(&image), "--out", p(&explicit), "--explicit-softmax"]);
    assert_eq!(fs::read(&mask).unwrap(), fs::read(&explicit).unwrap());

    let text = ok(&["describe", "--weights", p(&weights)]);
    assert!(text.contains("BioLite U-Net,0.0090,"), "{text}");
}

#[test]
fn self_test_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 10, 16, 2, "hard");
    let text = ok(&["eval", "--data", p(&data), "--split", "all", "--self-test", "--out", p(&tmp.path().join("e"))]);
    assert!(text.contains("frames=10"), "{text}");
    assert!(text.contains("miou=1.000000") && text.contains("pixel_accuracy=1.000000"), "{text}");
}

#[test]
fn describe_reports_the_default_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("layers.csv");
    let text = ok(&["describe", "--csv", p(&csv)]);
    assert!(text.contains("BioLite U-Net,0.0090,0.427,256x256"), "{text}");
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.lines().last().unwrap().starts_with("total,,9025,"), "{table}");
}

#[test]
fn bench_writes_stats_and_reference_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    ok(&["bench", "--frames", "3", "--warmup", "1", "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("source,stage,mean_ms,median_ms,p95_ms,frames,warmup,threads,input"));
    assert!(csv.contains("paper_pi4b_cpu,total,335,") && csv.contains("paper_gpu,total,0.41,"), "{csv}");
    assert!(csv.lines().any(|l| l.contains(",total,") && l.contains(",3,1,1,256x256")), "{csv}");
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_biolite"))
        .args(["synth", "--n", "2", "--size", "16"])
        .env("BIOLITE_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("manifest.tsv").is_file());
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_error(&biolite(&[]), 2, "usage");
    assert_error(&biolite(&["synth", "--difficulty", "extreme", "--out", p(tmp.path())]), 2, "usage");
    assert_error(&biolite(&["train", "--data", p(&tmp.path().join("missing"))]), 3, "data");

    let bad = tmp.path().join("bad.blu");
    fs::write(&bad, b"BLU1 but not really a weights file").unwrap();
    let image = tmp.path().join("x.png");
    synth(&tmp.path().join("d"), 1, 16, 0, "easy");
    fs::copy(tmp.path().join("d/images/frame_0000.png"), &image).unwrap();
    let out = biolite(&["infer", "--weights", p(&bad), "--image", p(&image), "--out", p(&tmp.path().join("m.png"))]);
    assert_error(&out, 4, "format");
}
