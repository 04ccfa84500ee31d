//! The `domdist` binary end to end: outputs, determinism and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn domdist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_domdist"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = domdist(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn analysis_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-synth", "--out", "d.tsv", "--num-domains", "3", "--dim", "4", "--shift", "2", "--train", "60", "--unlabeled", "60"]);
    for out in ["a", "b"] {
        ok(d, &["analyze", "--data", "d.tsv", "--out", out, "--measures", "l2,mmd", "--probe-size", "40"]);
    }
    for f in ["matrix_l2.csv", "log_matrix_mmd.csv", "separability.csv", "informativeness.csv"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
    let sep = String::from_utf8(read(d, "a/separability.csv")).unwrap();
    assert!(sep.starts_with("measure,z1,z2\nl2,"));
}

#[test]
fn training_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-synth", "--out", "m.tsv", "--multi-source", "--dim", "4", "--train", "80", "--unlabeled", "80"]);
    std::fs::write(d.join("cfg.toml"), "steps = 40\neval_interval = 10\nseeds = 2\nbatch_size = 8\n").unwrap();
    ok(d, &["train-single", "--config", "cfg.toml", "--data", "m.tsv", "--source", "near", "--target", "target", "--out", "single"]);
    assert!(read(d, "single/summary.csv").starts_with(b"seed,"));
    assert!(d.join("single/evals_seed1.csv").exists());

    let multi = [
        "train-multi", "--config", "cfg.toml", "--data", "m.tsv", "--sources", "near,adversarial", "--target", "target",
        "--round-length", "10", "--scheduler", "ucb", "--out", "multi",
    ];
    ok(d, &multi);
    ok(d, &["bandit-trace", "--report", "multi/reports.json", "--out", "again"]);
    for seed in 0..2 {
        let name = format!("trace_seed{seed}.csv");
        assert_eq!(read(d, &format!("multi/{name}")), read(d, &format!("again/{name}")));
    }
}

#[test]
fn exit_codes_separate_bad_input_from_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-synth", "--out", "d.tsv", "--num-domains", "2", "--dim", "3", "--train", "20", "--unlabeled", "20"]);
    std::fs::write(d.join("bad.toml"), "beta = -1.0\n").unwrap();
    let code = |args: &[&str]| domdist(d, args).status.code();
    assert_eq!(code(&["train-single", "--config", "bad.toml", "--data", "d.tsv", "--source", "d0", "--target", "d1", "--out", "x"]), Some(2));
    assert_eq!(code(&["train-single", "--data", "d.tsv", "--source", "nope", "--target", "d1", "--out", "x"]), Some(2));
    assert_eq!(code(&["analyze", "--data", "d.tsv", "--out", "x", "--measures", "euclid"]), Some(2));
    assert_eq!(code(&["analyze", "--data", "missing.tsv", "--out", "x"]), Some(1));
    std::fs::write(d.join("broken.tsv"), "a\ttrain\tzero\t1,2\n").unwrap();
    assert_eq!(code(&["analyze", "--data", "broken.tsv", "--out", "x"]), Some(2));
}
