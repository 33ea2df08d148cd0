//! The `webagg` binary and the committed demo fixture.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::read_tree;
use webagg_cli::demo::{DemoBundle, CONFIG_FILE};
use webagg_cli::{EXIT_CONFIG, EXIT_OK, EXIT_STAGE};

fn webagg(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_webagg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn committed_demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

#[test]
fn committed_demo_matches_generator() {
    let mut on_disk = read_tree(&committed_demo());
    on_disk.retain(|k, _| !k.starts_with("run/"));
    assert_eq!(on_disk, DemoBundle::build().render());
}

#[test]
fn demo_init_then_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, _) = webagg(&["demo-init", "demo"], tmp.path());
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("next: webagg --config"));
    let config = format!("demo/{CONFIG_FILE}");
    let (code, out, err) = webagg(&["--config", &config, "all"], tmp.path());
    assert_eq!(code, EXIT_OK, "{err}");
    for stage in ["anchors", "synthesize", "qc", "sample", "export-sft", "eval", "analyze"] {
        assert!(out.contains(&format!("{stage}: complete")), "{out}");
    }
    assert!(out.contains("pass@1"));
    assert!(tmp.path().join("demo/run/eval/report.json").exists());

    let (code, out, _) = webagg(&["--config", &config, "qc"], tmp.path());
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("qc: complete, 0 item(s) processed"), "{out}");
}

#[test]
fn invalid_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "seed = \"seven\"\n").unwrap();
    let (code, _, err) = webagg(&["--config", "bad.toml", "anchors"], tmp.path());
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("error"));
    let (code, _, _) = webagg(&["--config", "absent.toml", "anchors"], tmp.path());
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = webagg(&["frobnicate"], tmp.path());
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn missing_upstream_output_exits_with_stage_code() {
    let tmp = tempfile::tempdir().unwrap();
    webagg(&["demo-init", "demo"], tmp.path());
    let (code, _, err) = webagg(&["--config", &format!("demo/{CONFIG_FILE}"), "qc"], tmp.path());
    assert_eq!(code, EXIT_STAGE);
    assert!(err.contains("candidates.jsonl"), "{err}");
}

#[test]
fn secret_is_never_written_to_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    webagg(&["demo-init", "demo"], tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_webagg"))
        .args(["--config", &format!("demo/{CONFIG_FILE}"), "all"])
        .env("WEBAGG_API_KEY", "sk-test-should-not-leak")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    for (path, bytes) in read_tree(&tmp.path().join("demo/run")) {
        assert!(!String::from_utf8_lossy(&bytes).contains("sk-test-should-not-leak"), "{path}");
    }
}

#[test]
fn help_exits_ok() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, _) = webagg(&["--help"], tmp.path());
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("demo-init"));
}
