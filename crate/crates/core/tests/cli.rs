use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use onperc::checkpoint::Checkpoint;
use onperc::output::RunManifest;

fn onperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onperc")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CHAIN: [&str; 8] = ["--sizes", "8", "--thermalization", "15", "--measurements", "25", "--variant", "cut"];

#[test]
fn interrupted_run_resumes_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = CHAIN.to_vec();
    args.extend(["--epsilon", "1.2", "--seed", "9"]);

    let mut full = vec!["simulate", "--output", p(&a)];
    full.extend(&args);
    assert_eq!(code(&onperc(&full)), 0);

    let mut part = vec!["simulate", "--output", p(&b), "--stop-after", "23"];
    part.extend(&args);
    assert_eq!(code(&onperc(&part)), 0);
    let mid = Checkpoint::load(&b.join("chain.ckpt")).unwrap();
    assert_eq!(mid.header.sweeps, 23);

    let ckpt = b.join("chain.ckpt");
    assert_eq!(code(&onperc(&["resume", p(&ckpt), "--stop-after", "31"])), 0);
    assert_eq!(code(&onperc(&["resume", p(&ckpt)])), 0);

    assert_eq!(fs::read(a.join("chain.ckpt")).unwrap(), fs::read(&ckpt).unwrap());
    assert_eq!(fs::read(a.join("observables.csv")).unwrap(), fs::read(b.join("observables.csv")).unwrap());
    let done = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(done.header.sweeps, 40);
}

#[test]
fn resume_rejects_changed_beta_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--output", p(dir.path()), "--stop-after", "5", "--beta", "0.8"];
    args.extend(CHAIN);
    args.extend(["--epsilon", "1.5"]);
    assert_eq!(code(&onperc(&args)), 0);
    let ckpt = dir.path().join("chain.ckpt");

    let out = onperc(&["resume", p(&ckpt), "--beta", "0.9"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameters differ"));
    assert_eq!(code(&onperc(&["resume", p(&ckpt), "--beta", "0.8", "--stop-after", "6"])), 0);

    let out = onperc(&["resume", p(&dir.path().join("missing.ckpt"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));

    let mut bytes = fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&ckpt, bytes).unwrap();
    let out = onperc(&["resume", p(&ckpt)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&onperc(&["experiment", "no_such_recipe"])), 2);
    assert_eq!(code(&onperc(&["experiment", "custom", "--sizes", "7"])), 2);
    assert_eq!(code(&onperc(&["experiment", "custom", "--start", "lukewarm"])), 2);
    assert_eq!(code(&onperc(&["frobnicate"])), 2);
    assert_eq!(code(&onperc(&["simulate", "--sizes", "8,16"])), 2);
    assert_eq!(code(&onperc(&["--help"])), 0);
}

#[test]
fn experiment_writes_manifest_and_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fk");
    let out = onperc(&[
        "experiment",
        "fk_identity",
        "--sizes",
        "8",
        "--beta",
        "0.5",
        "--thermalization",
        "50",
        "--measurements",
        "300",
        "--output",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS fk_identity[L=8,beta=0.5]"), "{stdout}");
    let manifest = RunManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.spec.sizes, [8]);
    assert_eq!(manifest.chains.len(), 1);
    for f in &manifest.files {
        assert!(out_dir.join(&f.path).exists());
    }
    assert_eq!(code(&onperc(&["analyze", p(&out_dir)])), 0);
    assert!(out_dir.join("analysis.json").exists());
}

#[test]
fn failed_verdict_exits_with_one() {
    // far too short for the cap/strip separation to show
    let dir = tempfile::tempdir().unwrap();
    let out = onperc(&[
        "experiment",
        "c6_cap_vs_strip",
        "--sizes",
        "8,12,16",
        "--thermalization",
        "100",
        "--measurements",
        "400",
        "--output",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL c6["));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "recipe = \"custom\"\nseed = 4\n\n[model]\nn = 2\nbeta = \"0.7, 1.1\"\n\n[lattice]\nsizes = 8\n\n[schedule]\nthermalization = 20\nmeasurements = 40\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = onperc(&["experiment", "custom", "--config", p(&cfg), "--beta", "0.9", "--output", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.spec.n, 2);
    assert_eq!(m.spec.betas, [0.9]);
    assert_eq!(m.spec.seed, 4);
    assert_eq!(m.spec.schedule.measurements, 40);
}
