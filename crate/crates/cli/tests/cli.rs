//! End-to-end checks of the command-line surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_activevision"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "camera.image_width = 32\n\
         camera.image_height = 24\n\
         trainer.total_steps = 300\n\
         trainer.warmup = 32\n\
         trainer.batch_size = 8\n\
         trainer.buffer_capacity = 4096\n\
         trainer.target_sync = 100\n\
         eval.episodes = 4\n\
         robust.episodes = 3\n\
         robust.sigmas = 0,0.5\n",
    )
    .unwrap();
    path
}

#[test]
fn plan_prints_forty_candidates_with_one_best() {
    let out = run(&["plan", "--ball-x", "1.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "pan,tilt,entropy,ball_visible,is_best");
    assert_eq!(lines.len(), 41);
    let best_rows = lines[1..].iter().filter(|l| l.ends_with(",1")).count();
    assert_eq!(best_rows, 1);
}

#[test]
fn unknown_flags_and_commands_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["plan", "--no-such-flag"]).status.code(), Some(1));
    // config validation failures are usage errors too
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "trainer.gamma = 1.5\n").unwrap();
    let out = run(&["plan", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--checkpoint", "does-not-exist.ckpt"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn render_writes_a_pgm_frame() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "render",
        "--out",
        out_dir.to_str().unwrap(),
        "--tilt",
        "0.4",
    ]);
    assert!(out.status.success());
    let bytes = fs::read(out_dir.join("frame.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n160 120\n255\n"));
    assert_eq!(bytes.len(), 15 + 160 * 120);
    // resolved config is echoed for provenance
    assert!(out_dir.join("config_resolved.cfg").exists());
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "metrics.csv",
        "episodes.csv",
        "train_records.csv",
        "epochs.csv",
        "checkpoint.ckpt",
        "config_resolved.cfg",
    ] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,episode,ep_reward,loss,epsilon\n"));
    assert!(metrics.lines().count() > 10);
    let steps_log = fs::read_to_string(out_dir.join("episodes.csv")).unwrap();
    assert!(steps_log.starts_with("episode,t,action,reward,pan,tilt,goal_pan,goal_tilt,outcome\n"));
    assert_eq!(steps_log.lines().count(), 301); // header + one row per step

    let ckpt = out_dir.join("checkpoint.ckpt");
    let eval_out = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        eval_out.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mean success rate:"));
    assert!(eval_out.join("eval_records.csv").exists());

    // robustness on the same checkpoint
    let rob_out = dir.path().join("rob");
    let out = run(&[
        "robustness",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        rob_out.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(rob_out.join("robustness.csv")).unwrap();
    assert!(csv.starts_with("sigma,method,mean_success_rate,n,stderr\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2); // two sigmas, two methods
    assert!(rob_out.join("robustness.json").exists());
}

#[test]
fn echoed_config_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "render",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let echoed = out_dir.join("config_resolved.cfg");
    // Re-running with the echoed config reproduces the same echo.
    let out_dir2 = dir.path().join("out2");
    let out = run(&[
        "render",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        out_dir2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let a = fs::read_to_string(&echoed).unwrap();
    let b = fs::read_to_string(out_dir2.join("config_resolved.cfg")).unwrap();
    assert_eq!(a, b);
}
