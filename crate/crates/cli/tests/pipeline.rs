//! Stage manifests: dependencies, idempotent reruns and resumption.

mod common;

use common::*;
use webagg_core::gateway::ScriptEntry;
use webagg_core::pipeline::{outputs, PipelineError, RunOptions, Stage};

const SAMPLE: &str = "[sample]\nattempts = 1\ndataset = \"dataset.jsonl\"\n";

fn url(i: usize) -> String {
    format!("https://data.example/t{i:02}")
}

fn sampling(dir: &std::path::Path) -> Scenario {
    let sc = Scenario::new(dir);
    let pages: Vec<_> = (0..10).map(|i| page(&url(i), "Registry", &format!("Entry {i} is {}.", 10 + i))).collect();
    let mut records = Vec::new();
    let mut entries = vec![judge_always_incorrect()];
    for i in 0..10 {
        let q = format!("Task {i:02}: which value is listed?");
        records.push(record(&format!("t{i:02}"), &q, &(10 + i).to_string(), &[&url(i)], None));
        let m = solver(&format!("Task {i:02}:"));
        entries.push(ScriptEntry::reply(m.clone(), act("Open it.", &visit(&url(i)))));
        entries.push(ScriptEntry::reply(m, fin("Read it.", &(10 + i).to_string())));
    }
    sc.world(&pages).dataset(&records).script(entries).config(SAMPLE);
    sc
}

#[test]
fn downstream_stage_requires_upstream_output() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = sampling(tmp.path());
    let err = sc.pipeline().run_stage(Stage::ExportSft, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::StageDependencyMissing { stage: Stage::ExportSft, .. }), "{err}");
}

#[test]
fn completed_stage_reruns_as_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = sampling(tmp.path());
    let first = sc.run(Stage::Sample);
    assert_eq!(first.processed, 10);
    let before = std::fs::read(sc.out(outputs::ATTEMPTS)).unwrap();
    let second = sc.run(Stage::Sample);
    assert_eq!(second.processed, 0);
    assert!(second.manifest.complete);
    assert_eq!(std::fs::read(sc.out(outputs::ATTEMPTS)).unwrap(), before);
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = sampling(&tmp.path().join("whole"));
    whole.run(Stage::Sample);

    let split = sampling(&tmp.path().join("split"));
    let p = split.pipeline();
    let partial = p.run_stage(Stage::Sample, RunOptions { resume: false, limit: Some(3) }).unwrap();
    assert_eq!(partial.processed, 3);
    assert!(!partial.manifest.complete);
    let rest = p.run_stage(Stage::Sample, RunOptions { resume: true, limit: None }).unwrap();
    assert_eq!(rest.processed, 7);
    assert!(rest.manifest.complete);

    let read = |sc: &Scenario| std::fs::read(sc.out(outputs::ATTEMPTS)).unwrap();
    assert_eq!(read(&whole), read(&split));
}

#[test]
fn resume_after_config_edit_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = sampling(tmp.path());
    sc.pipeline()
        .run_stage(Stage::Sample, RunOptions { resume: false, limit: Some(2) })
        .unwrap();
    sc.config("[sample]\nattempts = 2\ndataset = \"dataset.jsonl\"\n");
    let err = sc.pipeline().run_stage(Stage::Sample, RunOptions { resume: true, limit: None }).unwrap_err();
    assert!(matches!(err, PipelineError::ManifestConfigMismatch { stage: Stage::Sample }), "{err}");
    assert_eq!(err.exit_code(), 1);

    let fresh = sc.pipeline().run_stage(Stage::Sample, RunOptions::default()).unwrap();
    assert_eq!(fresh.processed, 10);
}

#[test]
fn resume_without_manifest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = sampling(tmp.path());
    let err = sc.pipeline().run_stage(Stage::Sample, RunOptions { resume: true, limit: None }).unwrap_err();
    assert!(matches!(err, PipelineError::StageDependencyMissing { .. }), "{err}");
}
