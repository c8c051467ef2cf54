//! End-to-end runs of the `plainwalk` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plainwalk::config::RunConfig;
use plainwalk::presets;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plainwalk-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plainwalk"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("PLAINWALK_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_srw() -> RunConfig {
    let mut cfg = presets::config("srw-f2", &[]).unwrap();
    cfg.mc.n_paths = 500;
    cfg.mc.horizon = 100;
    cfg.mc.entropy_horizon = 0;
    cfg
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let base = scratch("malformed");
    let out = base.join("out");
    for text in ["{ not json", r#"{"group": {"free_rank": 2}, "walk": {"scalar": [{"word": "a1", "p": 1.0}]}, "typo": 1}"#] {
        let config = write_config(&base, text);
        let o = run(&["drift", "--config", &config, "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
    let _ = fs::remove_dir_all(&base);
}

#[test]
fn bad_walks_and_arguments_exit_2() {
    let base = scratch("badwalk");
    let config = write_config(&base, r#"{"group": {"free_rank": 2}, "walk": {"scalar": [{"word": "a1", "p": 0.5}, {"word": "a2", "p": 0.2}]}}"#);
    assert_eq!(run(&["validate", "--config", &config], None).status.code(), Some(2));
    assert_eq!(run(&["drift", "--config", &config, "--preset", "srw-f2"], None).status.code(), Some(2));
    assert_eq!(run(&["preset", "no-such-preset"], None).status.code(), Some(2));
    assert_eq!(run(&["preset", "srw-f2", "L=3"], None).status.code(), Some(2));
    let _ = fs::remove_dir_all(&base);
}

#[test]
fn enumeration_overflow_exits_3() {
    let base = scratch("overflow");
    let mut cfg = small_srw();
    cfg.mc.entropy_horizon = 40;
    let config = write_config(&base, &cfg.to_json());
    let o = run(&["simulate", "--config", &config], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let _ = fs::remove_dir_all(&base);
}

#[test]
fn drift_from_config_matches_closed_form() {
    let base = scratch("drift");
    let config = write_config(&base, &small_srw().to_json());
    let out = base.join("out");
    let o = run(&["drift", "--config", &config, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("drift.json")).unwrap()).unwrap();
    let gamma = v["drift"].as_f64().unwrap();
    assert!((gamma - 0.5).abs() < 1e-10, "{v}");
    let _ = fs::remove_dir_all(&base);
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let base = scratch("determinism");
    let config = write_config(&base, &small_srw().to_json());
    let mut texts = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = base.join(format!("out{i}"));
        let o = run(&["simulate", "--config", &config, "--seed", "7", "--out", out.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        texts.push(fs::read(out.join("simulate.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
    let _ = fs::remove_dir_all(&base);
}

#[test]
fn verify_passes_on_presets() {
    for (name, extra) in [("z3z3", None), ("dense-colored", None), ("application-sec6", Some("L=2"))] {
        let mut args = vec!["--preset", name, "verify"];
        if let Some(e) = extra {
            args = vec!["preset", name, e];
        }
        let o = run(&args, None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["verify"]["passed"], serde_json::Value::Bool(true), "{name}");
    }
}
