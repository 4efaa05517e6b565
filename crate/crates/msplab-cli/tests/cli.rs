use std::path::Path;
use std::process::{Command, Output};

use msplab::config::{ExperimentConfig, ExperimentKind, PRESET_NAMES};
use msplab::dynamics::Activation;
use msplab_cli::run::{config_text, parse_config};
use msplab_cli::verify::derivative_check;

fn msplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msplab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> String {
    let path = dir.join(name);
    std::fs::write(&path, config_text(cfg)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn msp_check_prints_the_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = msplab(&["msp-check", "--preset", "intro-h2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("MSP: yes, leap 1, ordering {1}<{1,2}<{1,2,3}"), "{}", stdout(&out));
    assert!(dir.path().join("msp.txt").exists());
    assert!(dir.path().join("manifest.toml").exists());

    let out = msplab(&["msp-check", "--preset", "parity3", "--out", dir.path().to_str().unwrap()]);
    assert!(stdout(&out).starts_with("MSP: no, leap 3"), "{}", stdout(&out));
}

#[test]
fn every_preset_round_trips_through_toml() {
    for name in PRESET_NAMES {
        let cfg = ExperimentConfig::preset(name).unwrap();
        assert_eq!(parse_config(&config_text(&cfg)).unwrap(), cfg, "{name}");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out_arg = out_dir.to_str().unwrap();

    let out = msplab(&["train-dfpde", "--preset", "no-such-preset", "--out", out_arg]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    let text = config_text(&ExperimentConfig::preset("intro-h2").unwrap()).replace("seed = 0", "seed = 0\nsede = 1");
    std::fs::write(&bad, text).unwrap();
    let out = msplab(&["train-dfpde", "--config", bad.to_str().unwrap(), "--out", out_arg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));

    let mut cfg = ExperimentConfig::preset("intro-h2").unwrap();
    cfg.dfpde.delta = -1.0;
    let path = write_config(dir.path(), "neg.toml", &cfg);
    let out = msplab(&["train-dfpde", "--config", &path, "--out", out_arg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dfpde.delta"));
}

#[test]
fn divergence_exits_with_3_and_keeps_the_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("fig1").unwrap();
    cfg.experiment = ExperimentKind::TrainSgd;
    cfg.repeats = 1;
    cfg.hyper.eta = 1000.0;
    cfg.hyper.horizon = 1e5;
    cfg.hyper.record_every = 1000.0;
    let path = write_config(dir.path(), "div.toml", &cfg);
    let out_dir = dir.path().join("o");
    let out = msplab(&["train-sgd", "--config", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out_dir.join("partial_trace.csv").exists());
    assert!(out_dir.join("manifest.toml").exists());
}

#[test]
fn verification_failure_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("vanilla-p2").unwrap();
    cfg.two_phase.t1 = 0.0;
    let path = write_config(dir.path(), "tp.toml", &cfg);
    let out = msplab(&["two-phase", "--config", &path, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut cfg = ExperimentConfig::preset("fig1").unwrap();
    cfg.experiment = ExperimentKind::TrainSgd;
    cfg.repeats = 1;
    cfg.d = 20;
    cfg.width = 10;
    cfg.seed = 9;
    cfg.hyper.horizon = 3.0;
    cfg.hyper.batch = 16;
    let path = write_config(dir.path(), "run.toml", &cfg);
    assert!(msplab(&["train-sgd", "--config", &path, "--out", a.to_str().unwrap()]).status.success());
    let manifest = a.join("manifest.toml");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("[manifest]") && text.contains("command = \"train-sgd\""), "{text}");
    assert!(msplab(&["train-sgd", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .status
        .success());
    assert_eq!(std::fs::read(a.join("sgd_seed9.csv")).unwrap(), std::fs::read(b.join("sgd_seed9.csv")).unwrap());
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("fig1").unwrap();
    cfg.experiment = ExperimentKind::TrainSgd;
    cfg.repeats = 1;
    cfg.d = 10;
    cfg.width = 6;
    cfg.hyper.horizon = 1.0;
    cfg.hyper.batch = 8;
    let path = write_config(dir.path(), "run.toml", &cfg);
    let run = |seed: &str| {
        stdout(&msplab(&[
            "train-sgd",
            "--config",
            &path,
            "--seed",
            seed,
            "--csv",
            "--out",
            dir.path().join(seed).to_str().unwrap(),
        ]))
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
}

#[test]
fn lower_bound_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = msplab(&["lower-bound", "--preset", "fig1", "--csv", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("bounds.csv").exists());
    assert!(stdout(&out).lines().count() > 1);
}

#[test]
fn corrupted_derivative_is_caught() {
    let act = Activation::shifted_sigmoid(1.0);
    assert!(derivative_check(&|x| act.value(x), &|x| act.d1(x)).is_ok());
    // injected fault: derivative off by 1%
    assert!(derivative_check(&|x| act.value(x), &|x| 1.01 * act.d1(x)).is_err());
}

#[test]
fn quick_verify_passes() {
    let out = msplab(&["verify", "quick"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().all(|l| l.starts_with("PASS")));
}
