//! Exit-code contract of the installed binary: 0 success, 1 usage, 2 data.

use std::path::Path;
use std::process::Command;

use earmark_cli::config::ExperimentConfig;
use earmark_core::scenegen::dataset::SplitSizes;

fn earmark() -> Command {
    Command::new(env!("CARGO_BIN_EXE_earmark"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::desk(11);
    cfg.out_dir = dir.join("run");
    cfg.dataset.split_sizes = SplitSizes { train: 4, val: 2, test: 2 };
    let path = dir.join("tiny.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn usage_errors_exit_one() {
    let out = earmark().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = earmark().arg("synth").output().unwrap();
    assert_eq!(out.status.code(), Some(1), "missing --config is a usage error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));

    let out = earmark().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth"));
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());

    let out = earmark().args(["train", "--head", "clip", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth"));

    let out = earmark().arg("report").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = earmark().arg("synth").arg("--config").arg(tmp.path().join("absent.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "unreadable config is a data error");
}

#[test]
fn synth_succeeds_then_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());

    let out = earmark().arg("synth").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("run/dataset/manifest.json").exists());
    assert!(tmp.path().join("run/config.toml").exists());

    let out = earmark().arg("synth").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "overwrite refusal is exit 1");

    // A different --out carves a fresh run from the same config.
    let out = earmark()
        .arg("synth")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("run2/dataset/manifest.json").exists());
}

#[test]
fn seed_override_changes_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    for (seed, dir) in [("21", "a"), ("21", "b"), ("22", "c")] {
        let out = earmark()
            .arg("synth")
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(tmp.path().join(dir))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("dataset/manifest.json")).unwrap();
    assert_eq!(read("a"), read("b"), "same seed, same manifest");
    assert_ne!(read("a"), read("c"), "different seed, different manifest");
}
