//! Builders for small on-disk worlds, scripts and datasets.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use webagg_core::dataset::{Domain, Provenance, QASampleRecord};
use webagg_core::gateway::{Matcher, ResponseScript, ScriptEntry};
use webagg_core::pipeline::{Pipeline, PipelineConfig, RunOptions, Stage, StageOutcome};
use webagg_core::web::PageRecord;

pub fn act(thought: &str, call: &str) -> String {
    format!("Thought: {thought}\nAction:\n```\n{call}\n```")
}

pub fn fin(thought: &str, answer: &str) -> String {
    format!("Thought: {thought}\nFinal Answer: {answer}")
}

pub fn visit(url: &str) -> String {
    format!("Visit(\"{url}\")")
}

pub fn page(url: &str, title: &str, text: &str) -> PageRecord {
    PageRecord {
        url: url.into(),
        title: title.into(),
        text: text.into(),
        elements: Vec::new(),
        links: Vec::new(),
        attachments: Vec::new(),
        exception: None,
    }
}

pub fn captcha(url: &str) -> PageRecord {
    PageRecord {
        exception: Some("captcha".into()),
        ..page(url, "Verification", "Prove you are human.")
    }
}

pub fn solver(phrase: &str) -> Matcher {
    Matcher::All(vec![Matcher::ModelTag("solver".into()), Matcher::TaskContains(phrase.into())])
}

pub fn judge_always_incorrect() -> ScriptEntry {
    ScriptEntry::reply(Matcher::ModelTag("judge".into()), "INCORRECT\nThe values differ.").persistent()
}

pub fn record(id: &str, question: &str, answer: &str, refs: &[&str], level: Option<u8>) -> QASampleRecord {
    QASampleRecord {
        id: id.into(),
        topic: "test".into(),
        question: question.into(),
        answer: answer.into(),
        language: "en".into(),
        domain: Domain::Geography,
        level,
        aggregation_ops: Vec::new(),
        reference_urls: refs.iter().map(|s| s.to_string()).collect(),
        anchor_url: refs.first().map(|s| s.to_string()).unwrap_or_default(),
        provenance: Provenance::default(),
    }
}

/// A run directory with its own world, script and configuration file.
pub struct Scenario {
    pub dir: PathBuf,
}

impl Scenario {
    pub fn new(dir: &Path) -> Self {
        std::fs::create_dir_all(dir.join("world")).unwrap();
        Self { dir: dir.to_path_buf() }
    }

    pub fn world(&self, pages: &[PageRecord]) -> &Self {
        let text: String = pages
            .iter()
            .map(|p| serde_json::to_string(p).unwrap() + "\n")
            .collect();
        std::fs::write(self.dir.join("world/pages.jsonl"), text).unwrap();
        self
    }

    pub fn script(&self, entries: Vec<ScriptEntry>) -> &Self {
        let s = serde_json::to_string_pretty(&ResponseScript::new(entries)).unwrap();
        std::fs::write(self.dir.join("script.json"), s).unwrap();
        self
    }

    pub fn dataset(&self, records: &[QASampleRecord]) -> &Self {
        std::fs::write(self.dir.join("dataset.jsonl"), webagg_core::dataset::to_jsonl(records)).unwrap();
        self
    }

    /// Writes the configuration; `extra` is appended verbatim.
    pub fn config(&self, extra: &str) -> &Self {
        let text = format!(
            "seed = 7\nworkers = 3\nout_dir = \"run\"\n\n[backend]\nkind = \"scripted\"\nscript = \"script.json\"\n\n\
             [retry]\nmax_attempts = 1\nbase_delay_ms = 0\nmax_delay_ms = 0\njitter = false\n\n\
             [web]\nfixture = \"world\"\n\n{extra}"
        );
        std::fs::write(self.dir.join("webagg.toml"), text).unwrap();
        self
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::new(PipelineConfig::load(&self.dir.join("webagg.toml")).unwrap()).unwrap()
    }

    pub fn run(&self, stage: Stage) -> StageOutcome {
        self.pipeline().run_stage(stage, RunOptions::default()).unwrap()
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.dir.join("run").join(rel)
    }
}

/// Every file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_values(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Every JSON object under `v` that looks like a trajectory.
pub fn find_trajectories<'a>(v: &'a serde_json::Value, out: &mut Vec<&'a serde_json::Value>) {
    match v {
        serde_json::Value::Object(m) => {
            if m.contains_key("steps") && m.contains_key("termination") {
                out.push(v);
            }
            m.values().for_each(|x| find_trajectories(x, out));
        }
        serde_json::Value::Array(a) => a.iter().for_each(|x| find_trajectories(x, out)),
        _ => {}
    }
}
