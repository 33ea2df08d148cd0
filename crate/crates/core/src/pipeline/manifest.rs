use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::dataset::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Anchors,
    Synthesize,
    Qc,
    Sample,
    ExportSft,
    Eval,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Anchors,
        Stage::Synthesize,
        Stage::Qc,
        Stage::Sample,
        Stage::ExportSft,
        Stage::Eval,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Anchors => "anchors",
            Stage::Synthesize => "synthesize",
            Stage::Qc => "qc",
            Stage::Sample => "sample",
            Stage::ExportSft => "export-sft",
            Stage::Eval => "eval",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Persistent record of one stage run. Paths are relative to the run
/// directory so manifests compare equal across machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub items: BTreeMap<String, ItemRecord>,
    pub counts: BTreeMap<String, usize>,
    pub complete: bool,
}

impl RunManifest {
    pub fn new(stage: Stage, config_hash: String, seed: u64, inputs: Vec<InputDigest>) -> Self {
        Self {
            stage,
            config_hash,
            seed,
            inputs,
            outputs: Vec::new(),
            items: BTreeMap::new(),
            counts: BTreeMap::new(),
            complete: false,
        }
    }

    pub fn path(run_dir: &Path, stage: Stage) -> PathBuf {
        run_dir.join("manifests").join(format!("{}.json", stage.name()))
    }

    pub fn load(path: &Path) -> Result<Option<Self>, PipelineError> {
        match std::fs::read_to_string(path) {
            Ok(t) => serde_json::from_str(&t)
                .map(Some)
                .map_err(|e| PipelineError::Io(format!("corrupt manifest {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), PipelineError> {
        let path = Self::path(run_dir, self.stage);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes()).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Digest of a file, or of every file under a directory with its relative path.
pub fn digest_path(path: &Path) -> Result<InputDigest, PipelineError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    if !path.is_dir() {
        return Ok(InputDigest {
            name,
            sha256: sha256_file(path)?,
        });
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(sha256_file(&path.join(&rel))?.as_bytes());
    }
    Ok(InputDigest {
        name,
        sha256: hex::encode(h.finalize()),
    })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), PipelineError> {
    let rd = std::fs::read_dir(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    for entry in rd {
        let entry = entry.map_err(|e| PipelineError::Io(e.to_string()))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Hash of the stage-relevant configuration plus all input digests.
pub fn config_hash<T: Serialize>(stage: Stage, settings: &T, inputs: &[InputDigest]) -> String {
    let view = serde_json::json!({
        "stage": stage,
        "settings": settings,
        "inputs": inputs,
    });
    hex::encode(Sha256::digest(serde_json::to_vec(&view).expect("hash view serializes")))
}

pub fn part_file_name(key: &str) -> String {
    let safe: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}-{}.json", &hex::encode(Sha256::digest(key.as_bytes()))[..8])
}

/// Per-item checkpoints for one stage, stored as one JSON file per item.
pub struct ItemRunner<'a> {
    pub run_dir: &'a Path,
    pub manifest: Mutex<RunManifest>,
    pub parts_dir: PathBuf,
}

pub struct ItemRun<P> {
    /// Part values in input order; None for items still pending.
    pub parts: Vec<Option<P>>,
    pub processed: usize,
    pub failures: Vec<(String, String)>,
}

impl<P> ItemRun<P> {
    pub fn complete(&self) -> bool {
        self.failures.is_empty() && self.parts.iter().all(Option::is_some)
    }
}

impl<'a> ItemRunner<'a> {
    pub fn new(run_dir: &'a Path, manifest: RunManifest) -> Self {
        let parts_dir = run_dir.join("parts").join(manifest.stage.name());
        Self {
            run_dir,
            manifest: Mutex::new(manifest),
            parts_dir,
        }
    }

    fn part_path(&self, key: &str) -> PathBuf {
        self.parts_dir.join(part_file_name(key))
    }

    fn load_part<P: DeserializeOwned>(&self, key: &str) -> Option<P> {
        let text = std::fs::read_to_string(self.part_path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Runs `work` over items not yet checkpointed, at most `limit` of them.
    /// `status` classifies a finished part for the manifest. An `Err` from
    /// `work` leaves the item pending and is reported as a failure.
    pub fn run<I, P, W, S>(
        &self,
        items: &[(String, I)],
        limit: Option<usize>,
        work: W,
        status: S,
    ) -> Result<ItemRun<P>, PipelineError>
    where
        I: Sync,
        P: Serialize + DeserializeOwned + Send,
        W: Fn(&str, &I) -> Result<P, String> + Sync,
        S: Fn(&P) -> ItemRecord + Sync,
    {
        let done: Vec<bool> = {
            let m = self.manifest.lock().expect("manifest lock");
            items
                .iter()
                .map(|(k, _)| m.items.contains_key(k) && self.part_path(k).exists())
                .collect()
        };
        let pending: Vec<usize> = (0..items.len())
            .filter(|i| !done[*i])
            .take(limit.unwrap_or(usize::MAX))
            .collect();
        let failures = Mutex::new(Vec::new());
        let io_error: Mutex<Option<PipelineError>> = Mutex::new(None);
        pending.par_iter().for_each(|&i| {
            let (key, item) = &items[i];
            match work(key, item) {
                Ok(part) => {
                    let record = status(&part);
                    let mut text = serde_json::to_string(&part).expect("part serializes");
                    text.push('\n');
                    if let Err(e) = write_atomic(&self.part_path(key), text.as_bytes()) {
                        *io_error.lock().expect("error lock") = Some(PipelineError::Io(e.to_string()));
                        return;
                    }
                    let mut m = self.manifest.lock().expect("manifest lock");
                    m.items.insert(key.clone(), record);
                    if let Err(e) = m.save(self.run_dir) {
                        *io_error.lock().expect("error lock") = Some(e);
                    }
                }
                Err(e) => failures.lock().expect("failure lock").push((key.clone(), e)),
            }
        });
        if let Some(e) = io_error.into_inner().expect("error lock") {
            return Err(e);
        }
        let mut failures = failures.into_inner().expect("failure lock");
        failures.sort();
        let parts = items.iter().map(|(k, _)| self.load_part(k)).collect();
        Ok(ItemRun {
            parts,
            processed: pending.len(),
            failures,
        })
    }

    pub fn into_manifest(self) -> RunManifest {
        self.manifest.into_inner().expect("manifest lock")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>(), Ok(s));
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
    }

    #[test]
    fn runner_checkpoints_and_skips_done_items() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<(String, u32)> = (0..5).map(|i| (format!("item/{i}"), i)).collect();
        let ok = |_: &P| ItemRecord {
            status: ItemStatus::Done,
            note: None,
        };
        type P = u32;
        let m = RunManifest::new(Stage::Sample, "h".into(), 1, vec![]);
        let r = ItemRunner::new(dir.path(), m);
        let first = r.run(&items, Some(2), |_, x| Ok(x * 10), ok).unwrap();
        assert_eq!(first.processed, 2);
        assert!(!first.complete());
        let m = r.into_manifest();
        assert_eq!(RunManifest::load(&RunManifest::path(dir.path(), Stage::Sample)).unwrap(), Some(m.clone()));
        let r = ItemRunner::new(dir.path(), m);
        let second = r.run(&items, None, |_, x| Ok(x * 10), ok).unwrap();
        assert_eq!(second.processed, 3);
        assert_eq!(second.parts, (0..5).map(|x| Some(x * 10)).collect::<Vec<_>>());
        let third = r.run(&items, None, |_, x| Ok(x * 10), ok).unwrap();
        assert_eq!(third.processed, 0);
    }

    #[test]
    fn digests_cover_directories() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        let d1 = digest_path(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.txt"), "y").unwrap();
        assert_ne!(d1, digest_path(dir.path()).unwrap());
    }
}
