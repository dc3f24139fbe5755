use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualcascade::fourier::ifft2c;
use dualcascade::phantom::rss_combine;
use dualcascade::storage::{
    encode_pgm, load_checkpoint, read_image, read_tensor, save_checkpoint, Checkpoint,
};
use dualcascade::{CascadeConfig, ModelParams, OptimState, SamplingMask, SubnetConfig, UndersampledSample};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddcascade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantom(dir: &Path, n: &str, coils: &str) -> Output {
    run(&["phantom", "--out", s(dir), "--n", n, "--size", "16", "--coils", coils, "--seed", "7"])
}

const SMALL: [&str; 8] = ["--hidden", "4", "--se-reduction", "2", "--blocks", "1", "--center-frac", "0.125"];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    run(&args)
}

fn tiny_config(coils: usize) -> CascadeConfig {
    CascadeConfig {
        subnet: SubnetConfig {
            hidden_channels: 4,
            se_reduction: 2,
            blocks: 1,
            ..SubnetConfig::for_coils(coils)
        },
        ..CascadeConfig::for_coils(coils)
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn phantom_is_deterministic_and_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(phantom(&a, "4", "2").status.success());
    assert!(phantom(&b, "4", "2").status.success());
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 13);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("case=")).count(), 4);
    assert!(manifest.contains("cases=4"));
}

#[test]
fn bad_arguments_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = phantom(tmp.path(), "0", "2");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["phantom", "--out", s(tmp.path()), "--n", "2", "--size", "15"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn train_writes_loadable_reproducible_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(phantom(&data, "1", "1").status.success());
    let (a, b) = (tmp.path().join("a.ddck"), tmp.path().join("b.ddck"));
    let out = train(&data, &a, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("step=1 loss="));
    assert!(stdout.contains("final loss="));
    let ck = load_checkpoint(&a, Some(&tiny_config(1))).unwrap();
    assert_eq!(ck.optim.step, 1);

    assert!(train(&data, &b, &[]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // the ablation switch reaches the checkpoint config
    let c = tmp.path().join("c.ddck");
    assert!(train(&data, &c, &["--cir", "false"]).status.success());
    assert!(!load_checkpoint(&c, None).unwrap().config.cir_enabled);
}

#[test]
fn divergent_training_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(phantom(&data, "1", "1").status.success());
    let ck = tmp.path().join("x.ddck");
    let out = train(&data, &ck, &["--epochs", "4", "--lr", "1e300"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
}

fn mask_file(dir: &Path, seed: &str) -> PathBuf {
    let p = dir.join(format!("mask{seed}.ddt"));
    let out = run(&["mask", "--out", s(&p), "--width", "16", "--accel", "4", "--center-frac", "0.125", "--seed", seed]);
    assert!(out.status.success());
    p
}

#[test]
fn reconstruct_pins_measurements_and_zero_model_is_zero_filling() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(phantom(&data, "1", "2").status.success());
    let kpath = data.join("case_0000_kfull.ddt");
    let mpath = mask_file(tmp.path(), "3");

    let cfg = tiny_config(2);
    let params = ModelParams::zeros(&cfg);
    let optim = OptimState::new(&params, 1e-3);
    let ck = tmp.path().join("zero.ddck");
    save_checkpoint(&ck, &Checkpoint { config: cfg, params, optim }).unwrap();

    let (img, k) = (tmp.path().join("r.pgm"), tmp.path().join("r.ddt"));
    let out = run(&["reconstruct", "--ckpt", s(&ck), "--kspace", s(&kpath), "--mask", s(&mpath), "--out-img", s(&img), "--out-k", s(&k)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let k_in = read_image(&kpath).unwrap();
    let mask = SamplingMask::from_tensor(&read_tensor(&mpath).unwrap().into_real().unwrap()).unwrap();
    let k_out = read_image(&k).unwrap();
    let w = k_in.width();
    for (row_o, row_i) in k_out.data().chunks(w).zip(k_in.data().chunks(w)) {
        for c in (0..w).filter(|&c| mask.is_sampled(c)) {
            assert_eq!(row_o[c], row_i[c]);
        }
    }
    let zf = UndersampledSample::measured(&k_in, &mask).unwrap();
    let want = encode_pgm(&rss_combine(&ifft2c(&zf.k_sparse))).unwrap();
    assert_eq!(std::fs::read(&img).unwrap(), want);
}

#[test]
fn reconstruct_failures_leave_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(phantom(&data, "1", "2").status.success());
    let kpath = data.join("case_0000_kfull.ddt");
    let cfg = tiny_config(1);
    let params = ModelParams::zeros(&cfg);
    let optim = OptimState::new(&params, 1e-3);
    let ck = tmp.path().join("one_coil.ddck");
    save_checkpoint(&ck, &Checkpoint { config: cfg, params, optim }).unwrap();
    let (img, k) = (tmp.path().join("r.pgm"), tmp.path().join("r.ddt"));

    let missing = tmp.path().join("nope.ddt");
    let out = run(&["reconstruct", "--ckpt", s(&ck), "--kspace", s(&kpath), "--mask", s(&missing), "--out-img", s(&img), "--out-k", s(&k)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!img.exists() && !k.exists());

    let mpath = mask_file(tmp.path(), "4");
    let out = run(&["reconstruct", "--ckpt", s(&ck), "--kspace", s(&kpath), "--mask", s(&mpath), "--out-img", s(&img), "--out-k", s(&k)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config mismatch"));
    assert!(!img.exists() && !k.exists());
}

#[test]
fn evaluate_reports_and_compares() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(phantom(&data, "3", "1").status.success());
    let (a, b) = (tmp.path().join("a.ddck"), tmp.path().join("b.ddck"));
    assert!(train(&data, &a, &[]).status.success());
    assert!(train(&data, &b, &["--cir", "false"]).status.success());

    let report = tmp.path().join("one.txt");
    let out = run(&["evaluate", "--ckpt", s(&a), "--data", s(&data), "--center-frac", "0.125", "--report", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("case=")).count(), 6);

    let pair = tmp.path().join("pair.txt");
    let out = run(&["evaluate", "--ckpt", s(&a), "--ckpt", s(&b), "--data", s(&data), "--center-frac", "0.125", "--report", s(&pair)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&pair).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("ttest t=")).count(), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("paired t-test"));

    let same = tmp.path().join("same.txt");
    let out = run(&["evaluate", "--ckpt", s(&a), "--ckpt", s(&a), "--data", s(&data), "--center-frac", "0.125", "--report", s(&same)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate test"));
    assert!(!same.exists());

    let out = run(&["evaluate", "--ckpt", s(&a), "--ckpt", s(&a), "--ckpt", s(&a), "--data", s(&data), "--report", s(&same)]);
    assert_eq!(out.status.code(), Some(2));
}
