use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::blacklist::Blacklist;
use super::page::{Attachment, Behavior, ElementKind, FileBlob, InteractiveElement, PageView, SearchHit};
use super::urlnorm::normalize_url;
use super::{EnvError, WebBackend};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub id: String,
    pub kind: ElementKind,
    #[serde(default)]
    pub label: String,
    /// Click target for buttons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkRecord {
    Internal(String),
    Marked { url: String, #[serde(default)] external: bool },
}

impl LinkRecord {
    pub fn url(&self) -> &str {
        match self {
            LinkRecord::Internal(u) => u,
            LinkRecord::Marked { url, .. } => url,
        }
    }

    fn external(&self) -> bool {
        matches!(self, LinkRecord::Marked { external: true, .. })
    }
}

/// One line of `pages.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub url: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub elements: Vec<ElementRecord>,
    #[serde(default)]
    pub links: Vec<LinkRecord>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    /// Declared failure such as `captcha`; visiting raises an environment exception.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchScoring {
    pub title_weight: u32,
    pub text_weight: u32,
    pub snippet_chars: usize,
}

impl Default for SearchScoring {
    fn default() -> Self {
        Self {
            title_weight: 3,
            text_weight: 1,
            snippet_chars: 160,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid fixture at record {record}: {reason}")]
    FixtureInvalid { record: usize, reason: String },
}

fn invalid(record: usize, reason: impl Into<String>) -> FixtureError {
    FixtureError::FixtureInvalid {
        record,
        reason: reason.into(),
    }
}

/// An immutable simulated web.
#[derive(Debug, Clone)]
pub struct FixtureWorld {
    pages: BTreeMap<String, PageRecord>,
    order: Vec<String>,
    files: BTreeMap<String, FileBlob>,
    scoring: SearchScoring,
}

pub fn load_fixture(dir: &Path) -> Result<FixtureWorld, FixtureError> {
    let pages_path = dir.join("pages.jsonl");
    let text = std::fs::read_to_string(&pages_path).map_err(|source| FixtureError::Io {
        path: pages_path.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PageRecord =
            serde_json::from_str(line).map_err(|e| invalid(i + 1, format!("malformed JSON: {e}")))?;
        records.push((i + 1, rec));
    }
    let mut files = BTreeMap::new();
    for (line, rec) in &records {
        for a in &rec.attachments {
            if files.contains_key(&a.path) {
                continue;
            }
            let p = dir.join(&a.path);
            let bytes = std::fs::read(&p)
                .map_err(|e| invalid(*line, format!("attachment {} unreadable: {e}", a.path)))?;
            files.insert(
                a.path.clone(),
                FileBlob {
                    path: a.path.clone(),
                    mime: a.mime.clone(),
                    bytes,
                },
            );
        }
    }
    FixtureWorld::build(records, files)
}

impl FixtureWorld {
    /// Validates records given as (record number, page) pairs.
    pub fn build(
        records: Vec<(usize, PageRecord)>,
        files: BTreeMap<String, FileBlob>,
    ) -> Result<Self, FixtureError> {
        if records.is_empty() {
            return Err(invalid(0, "a world must contain at least one page"));
        }
        let mut pages = BTreeMap::new();
        let mut order = Vec::new();
        let mut line_of = BTreeMap::new();
        for (line, mut rec) in records {
            rec.url = normalize_url(&rec.url);
            if rec.url.is_empty() {
                return Err(invalid(line, "empty url"));
            }
            if pages.contains_key(&rec.url) {
                return Err(invalid(line, format!("duplicate url {}", rec.url)));
            }
            let mut ids = BTreeSet::new();
            for e in &rec.elements {
                if !ids.insert(e.id.as_str()) {
                    return Err(invalid(line, format!("duplicate element id {}", e.id)));
                }
                match (e.kind, &e.target) {
                    (ElementKind::Button, None) => {
                        return Err(invalid(line, format!("button {} has no target", e.id)))
                    }
                    (ElementKind::Textbox, Some(_)) => {
                        return Err(invalid(line, format!("textbox {} cannot have a target", e.id)))
                    }
                    _ => {}
                }
            }
            line_of.insert(rec.url.clone(), line);
            order.push(rec.url.clone());
            pages.insert(rec.url.clone(), rec);
        }
        for url in &order {
            let rec = &pages[url];
            let line = line_of[url];
            for e in &rec.elements {
                if let Some(t) = &e.target {
                    if !pages.contains_key(&normalize_url(t)) {
                        return Err(invalid(line, format!("dangling click target {t} on {}", e.id)));
                    }
                }
            }
            for l in &rec.links {
                if !l.external() && !pages.contains_key(&normalize_url(l.url())) {
                    return Err(invalid(line, format!("unresolved link {} (mark it external)", l.url())));
                }
            }
            for a in &rec.attachments {
                if !files.contains_key(&a.path) {
                    return Err(invalid(line, format!("missing attachment {}", a.path)));
                }
            }
        }
        Ok(Self {
            pages,
            order,
            files,
            scoring: SearchScoring::default(),
        })
    }

    pub fn with_scoring(mut self, scoring: SearchScoring) -> Self {
        self.scoring = scoring;
        self
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Page URLs in file order.
    pub fn urls(&self) -> &[String] {
        &self.order
    }

    pub fn page(&self, url: &str) -> Option<&PageRecord> {
        self.pages.get(&normalize_url(url))
    }

    fn view(rec: &PageRecord) -> PageView {
        PageView {
            url: rec.url.clone(),
            title: rec.title.clone(),
            text: rec.text.clone(),
            dom_outline: rec
                .elements
                .iter()
                .map(|e| InteractiveElement {
                    element_id: e.id.clone(),
                    kind: e.kind,
                    label: e.label.clone(),
                    behavior: match &e.target {
                        Some(t) => Behavior::Navigate(normalize_url(t)),
                        None => Behavior::Store,
                    },
                })
                .collect(),
            outlinks: rec.links.iter().map(|l| normalize_url(l.url())).collect(),
            attachments: rec.attachments.clone(),
        }
    }

    /// Term-frequency ranking over every page, highest first, ties by URL.
    pub fn ranked(&self, query: &str) -> Vec<(u64, &PageRecord)> {
        let terms = tokenize(query);
        if terms.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(u64, &PageRecord)> = self
            .pages
            .values()
            .filter_map(|p| {
                let s = score(&terms, &p.title, &p.text, &self.scoring);
                (s > 0).then_some((s, p))
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.url.cmp(&b.1.url)));
        scored
    }
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn score(terms: &[String], title: &str, text: &str, cfg: &SearchScoring) -> u64 {
    let title_toks = tokenize(title);
    let text_toks = tokenize(text);
    let tf = |toks: &[String], t: &str| toks.iter().filter(|x| x.as_str() == t).count() as u64;
    terms
        .iter()
        .map(|t| u64::from(cfg.title_weight) * tf(&title_toks, t) + u64::from(cfg.text_weight) * tf(&text_toks, t))
        .sum()
}

impl WebBackend for FixtureWorld {
    fn search(&self, query: &str, limit: usize, exclude: &Blacklist) -> Result<Vec<SearchHit>, EnvError> {
        Ok(self
            .ranked(query)
            .into_iter()
            .filter(|(_, p)| !exclude.matches(&p.url))
            .take(limit)
            .map(|(_, p)| SearchHit {
                url: p.url.clone(),
                title: p.title.clone(),
                snippet: p.text.chars().take(self.scoring.snippet_chars).collect(),
            })
            .collect())
    }

    fn fetch(&self, url: &str) -> Result<PageView, EnvError> {
        let key = normalize_url(url);
        let rec = self
            .pages
            .get(&key)
            .ok_or_else(|| EnvError::UnknownUrl(url.to_string()))?;
        if let Some(kind) = &rec.exception {
            return Err(EnvError::EnvironmentException(format!("{kind} while loading {key}")));
        }
        Ok(Self::view(rec))
    }

    fn activate(
        &self,
        _page: &PageView,
        element: &InteractiveElement,
        _inputs: &BTreeMap<String, String>,
    ) -> Result<PageView, EnvError> {
        match &element.behavior {
            Behavior::Navigate(target) => self.fetch(target),
            Behavior::Store | Behavior::Script(_) => Err(EnvError::ElementNotFound(format!(
                "{} is not clickable",
                element.element_id
            ))),
        }
    }

    fn read_file(&self, path: &str) -> Result<FileBlob, EnvError> {
        self.files
            .get(path)
            .cloned()
            .ok_or_else(|| EnvError::FileMissing(path.to_string()))
    }
}
