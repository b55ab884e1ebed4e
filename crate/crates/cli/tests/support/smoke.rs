//! End-to-end runs of the `tbdq` binary on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tbdq_core::io::RunConfig;

/// Small enough that every command finishes in well under a second.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.n_sequences = 2;
    cfg.scene.n_frames = 6;
    cfg.scene.d_app = 8;
    cfg.detector.d_model = 16;
    cfg.detector.d_app = 8;
    cfg.detector.grid_w = 4;
    cfg.detector.grid_h = 4;
    cfg.associator.d_model = 16;
    cfg.associator.n_heads = 2;
    cfg.associator.ffn_dim = 32;
    // Enough steps for detection scores to clear the birth threshold.
    cfg.train.epochs = 2;
    cfg.train.clips_per_epoch = 40;
    cfg.train.clip_length = 3;
    cfg.train.lr = 2e-3;
    cfg.train.lr_milestones = Vec::new();
    cfg
}

pub fn tbdq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbdq"))
        .args(args)
        .env("TBDQ_LOG", "warn")
        .output()
        .expect("spawn tbdq")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn ok(args: &[&str]) -> String {
    let out = tbdq(args);
    assert!(
        out.status.success(),
        "tbdq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Runs a failing command and returns its single stderr line.
pub fn fails(args: &[&str]) -> String {
    let out = tbdq(args);
    assert_eq!(out.status.code(), Some(1), "tbdq {args:?} should fail");
    let err = String::from_utf8(out.stderr).expect("utf-8 stderr");
    let lines: Vec<&str> = err.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 1, "expected one line, got {err:?}");
    assert!(lines[0].starts_with("error kind="), "{}", lines[0]);
    lines[0].to_string()
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    cfg.save(&path).unwrap();
    path
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config());
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        ok(&[
            "generate",
            "--config",
            s(&cfg),
            "--out",
            s(dir),
            "--seed",
            seed,
        ]);
    }
    let (fa, fb, fc) = (files_under(&a), files_under(&b), files_under(&c));
    assert!(fa.iter().any(|(p, _)| p.ends_with("gt.txt")));
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
}

pub fn eval_of_ground_truth_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config());
    let data = tmp.path().join("data");
    ok(&[
        "generate",
        "--config",
        s(&cfg),
        "--out",
        s(&data),
        "--seed",
        "3",
    ]);
    let gt = data.join("seq-000/gt.txt");
    let csv = tmp.path().join("self.csv");
    let table = ok(&[
        "eval",
        "--gt",
        s(&gt),
        "--results",
        s(&gt),
        "--csv",
        s(&csv),
    ]);
    assert!(table.contains("HOTA"));
    let text = fs::read_to_string(&csv).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    for v in &row[..5] {
        assert!((v - 1.0).abs() < 1e-12, "{text}");
    }
    assert_eq!(&row[5..8], &[0.0, 0.0, 0.0]);
}

pub fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_config(t, &tiny_config());
    let data = t.join("data");
    ok(&[
        "generate",
        "--config",
        s(&cfg),
        "--out",
        s(&data),
        "--seed",
        "1",
    ]);
    assert!(data.join("config.toml").exists());

    let ckpt = t.join("model/ckpt.json");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
        "--seed",
        "1",
    ]);
    assert!(ckpt.exists());
    assert!(t.join("model/ckpt.loss.csv").exists());
    let resolved = RunConfig::load(&t.join("model/ckpt.config.toml")).unwrap();
    assert_eq!(resolved.train.seed, 1);

    let seq = data.join("seq-000");
    let learned = t.join("learned.txt");
    let greedy = t.join("greedy.txt");
    let attention = t.join("attention.csv");
    ok(&[
        "track",
        "--config",
        s(&cfg),
        "--data",
        s(&seq),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&learned),
        "--attention",
        s(&attention),
    ]);
    ok(&[
        "track",
        "--data",
        s(&seq),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&t.join("defaults.txt")),
    ]);
    ok(&[
        "track",
        "--config",
        s(&cfg),
        "--data",
        s(&seq),
        "--greedy",
        "--out",
        s(&greedy),
    ]);
    assert!(t.join("learned.config.toml").exists());
    assert!(fs::read_to_string(&attention)
        .unwrap()
        .starts_with("frame,map,row,col,weight"));

    let gt = seq.join("gt.txt");
    let per_alpha = t.join("alpha.csv");
    let table = ok(&[
        "eval",
        "--gt",
        s(&gt),
        "--results",
        s(&greedy),
        "--per-alpha",
        s(&per_alpha),
    ]);
    assert!(table.contains("IDF1"));
    assert_eq!(fs::read_to_string(&per_alpha).unwrap().lines().count(), 20);
    let side = ok(&[
        "compare",
        "--gt",
        s(&gt),
        "--a",
        s(&learned),
        "--b",
        s(&greedy),
        "--label-a",
        "tbdq",
        "--label-b",
        "iou",
    ]);
    assert!(side.contains("tbdq") && side.contains("iou"));

    let plots = t.join("plots");
    ok(&[
        "plot",
        "--results",
        s(&learned),
        "--gt",
        s(&gt),
        "--attention",
        s(&attention),
        "--out",
        s(&plots),
        "--max-frames",
        "3",
        "--width",
        "320",
        "--height",
        "180",
    ]);
    let pngs: Vec<_> = fs::read_dir(&plots)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert!(pngs.iter().any(|n| n.starts_with("frame_")));
    assert!(
        pngs.iter().any(|n| n.starts_with("attention_")),
        "{:?} {}",
        pngs,
        fs::read_to_string(&attention).unwrap()
    );
}

pub fn errors_are_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let missing = t.join("nope.txt");
    let line = fails(&["eval", "--gt", s(&missing), "--results", s(&missing)]);
    assert!(line.starts_with("error kind=io"), "{line}");

    let cfg = write_config(t, &tiny_config());
    let data = t.join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    let seq = data.join("seq-000");
    let line = fails(&[
        "track",
        "--config",
        s(&cfg),
        "--data",
        s(&seq),
        "--out",
        s(&t.join("r.txt")),
    ]);
    assert!(line.starts_with("error kind=usage"), "{line}");

    let ckpt = t.join("ckpt.json");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
    ]);
    let mut other = tiny_config();
    other.associator.tau_q = 0.4;
    let other_path = t.join("other.toml");
    other.save(&other_path).unwrap();
    fails(&[
        "track",
        "--config",
        s(&other_path),
        "--data",
        s(&seq),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&t.join("r.txt")),
    ]);

    fs::write(t.join("bad.toml"), "schema_version = 99\n").unwrap();
    fails(&[
        "generate",
        "--config",
        s(&t.join("bad.toml")),
        "--out",
        s(&t.join("x")),
    ]);
}

/// Every scenario, by name.
pub const ALL: [(&str, fn()); 4] = [
    ("generate_is_deterministic", generate_is_deterministic),
    (
        "eval_of_ground_truth_scores_one",
        eval_of_ground_truth_scores_one,
    ),
    ("full_pipeline", full_pipeline),
    ("errors_are_one_line", errors_are_one_line),
];
