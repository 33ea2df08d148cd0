use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::observation::{char_window, ElementState, FileContent, Observation, PageWindow, Payload};
use super::page::{is_text_mime, ElementKind, PageView};
use super::tools::{ParamKind, Tool, ToolCall, Toolset};
use super::{normalize_url, Blacklist, EnvError, WebBackend};
use crate::aggregation::{parse_expr, Env, Evaluator};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Character budget for any single text payload.
    pub text_budget: usize,
    pub search_limit: usize,
    /// Characters of context on each side of a StrFind match.
    pub strfind_context: usize,
    pub strfind_max_matches: usize,
    pub chars_per_pixel: usize,
    pub compute_precision: u32,
    pub vision_model_tag: String,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            text_budget: 20_000,
            search_limit: 10,
            strfind_context: 80,
            strfind_max_matches: 20,
            chars_per_pixel: 1,
            compute_precision: 12,
            vision_model_tag: "vision".into(),
        }
    }
}

/// Everything needed to open fresh sessions over one shared world.
#[derive(Clone)]
pub struct EnvFactory {
    pub backend: Arc<dyn WebBackend>,
    pub blacklist: Arc<Blacklist>,
    pub config: EnvConfig,
    pub vision: Option<Gateway>,
}

impl std::fmt::Debug for EnvFactory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvFactory").field("config", &self.config).finish_non_exhaustive()
    }
}

impl EnvFactory {
    pub fn new(backend: Arc<dyn WebBackend>, blacklist: Arc<Blacklist>, config: EnvConfig) -> Self {
        Self {
            backend,
            blacklist,
            config,
            vision: None,
        }
    }

    pub fn with_vision(mut self, gateway: Gateway) -> Self {
        self.vision = Some(gateway);
        self
    }

    pub fn session(&self, toolset: Toolset) -> EnvSession {
        let s = EnvSession::new(self.backend.clone(), toolset, self.blacklist.clone(), self.config.clone());
        match &self.vision {
            Some(g) => s.with_vision(g.clone()),
            None => s,
        }
    }
}

#[derive(Debug, Clone)]
struct PageState {
    page: PageView,
    offset: usize,
}

/// Per-episode browsing state. Owned by one agent; never shared.
pub struct EnvSession {
    backend: Arc<dyn WebBackend>,
    toolset: Toolset,
    blacklist: Arc<Blacklist>,
    config: EnvConfig,
    vision: Option<Gateway>,
    current: Option<PageState>,
    history: Vec<PageState>,
    inputs: BTreeMap<String, BTreeMap<String, String>>,
    visited: BTreeSet<String>,
}

impl std::fmt::Debug for EnvSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvSession")
            .field("current", &self.current_url())
            .field("history", &self.history.len())
            .field("visited", &self.visited)
            .finish_non_exhaustive()
    }
}

impl EnvSession {
    pub fn new(
        backend: Arc<dyn WebBackend>,
        toolset: Toolset,
        blacklist: Arc<Blacklist>,
        config: EnvConfig,
    ) -> Self {
        Self {
            backend,
            toolset,
            blacklist,
            config,
            vision: None,
            current: None,
            history: Vec::new(),
            inputs: BTreeMap::new(),
            visited: BTreeSet::new(),
        }
    }

    /// Model used by ImageCaption and non-text FileRead.
    pub fn with_vision(mut self, gateway: Gateway) -> Self {
        self.vision = Some(gateway);
        self
    }

    pub fn toolset(&self) -> &Toolset {
        &self.toolset
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn current_url(&self) -> Option<&str> {
        self.current.as_ref().map(|s| s.page.url.as_str())
    }

    pub fn visited_urls(&self) -> &BTreeSet<String> {
        &self.visited
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Runs one tool call. Failures come back as `tool_error` observations.
    pub fn exec_tool(&mut self, call: &ToolCall) -> Observation {
        match self.dispatch(call) {
            Ok(obs) => obs,
            Err(e) => e.into_observation(),
        }
    }

    fn dispatch(&mut self, call: &ToolCall) -> Result<Observation, EnvError> {
        if !self.toolset.contains(call.tool) {
            return Err(EnvError::ToolNotAvailable(call.tool.name().into()));
        }
        check_args(call)?;
        let text = |name: &str| call.text(name).unwrap_or_default().to_string();
        match call.tool {
            Tool::Search => self.search(&text("query")),
            Tool::Visit => self.visit(&text("url")),
            Tool::StrFind => self.str_find(&text("query")),
            Tool::Input => self.input(&text("text"), &text("tbox_id")),
            Tool::Click => self.click(&text("button_id")),
            Tool::Scroll => self.scroll(call.int("pixels").unwrap_or_default()),
            Tool::Goback => self.go_back(),
            Tool::FileRead => self.file_read(&text("path")),
            Tool::Screenshot => Ok(Observation::new(Payload::ScreenshotReceipt {
                path: text("path"),
                url: self.current_url().map(str::to_owned),
            })),
            Tool::ImageCaption => self.caption(&text("path")),
            Tool::Compute => self.compute(&text("expr")),
        }
    }

    fn search(&self, query: &str) -> Result<Observation, EnvError> {
        if query.trim().is_empty() {
            return Err(EnvError::InvalidArguments("empty search query".into()));
        }
        let hits = self
            .backend
            .search(query, self.config.search_limit, &self.blacklist)?
            .into_iter()
            .filter(|h| !self.blacklist.matches(&h.url))
            .collect();
        Ok(Observation::new(Payload::SearchResults(hits)))
    }

    fn visit(&mut self, url: &str) -> Result<Observation, EnvError> {
        let url = normalize_url(url);
        if self.blacklist.matches(&url) {
            return Err(EnvError::BlacklistedUrl(url));
        }
        let page = self.backend.fetch(&url)?;
        Ok(self.navigate_to(page))
    }

    fn navigate_to(&mut self, page: PageView) -> Observation {
        self.visited.insert(normalize_url(&page.url));
        if let Some(prev) = self.current.take() {
            self.history.push(prev);
        }
        self.current = Some(PageState { page, offset: 0 });
        self.page_observation()
    }

    fn current(&self) -> Result<&PageState, EnvError> {
        self.current.as_ref().ok_or(EnvError::NoCurrentPage)
    }

    fn page_observation(&self) -> Observation {
        let Some(state) = &self.current else {
            return EnvError::NoCurrentPage.into_observation();
        };
        let page = &state.page;
        let (text, truncated) = char_window(&page.text, state.offset, self.config.text_budget);
        let values = self.inputs.get(&page.url);
        let elements = page
            .dom_outline
            .iter()
            .map(|e| ElementState {
                element: e.clone(),
                value: values.and_then(|v| v.get(&e.element_id)).cloned(),
            })
            .collect();
        Observation {
            payload: Payload::PageView(PageWindow {
                url: page.url.clone(),
                title: page.title.clone(),
                text,
                offset: state.offset,
                total_chars: page.text.chars().count(),
                elements,
                outlinks: page.outlinks.clone(),
                attachments: page.attachments.clone(),
            }),
            truncated,
        }
    }

    fn str_find(&self, query: &str) -> Result<Observation, EnvError> {
        if query.is_empty() {
            return Err(EnvError::InvalidArguments("empty search string".into()));
        }
        let text: Vec<char> = self.current()?.page.text.chars().collect();
        let lower: Vec<char> = text.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
        let needle: Vec<char> = query.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect();
        let ctx = self.config.strfind_context;
        let mut matches = Vec::new();
        let mut truncated = false;
        let mut i = 0;
        while i + needle.len() <= lower.len() {
            if lower[i..i + needle.len()] == needle[..] {
                if matches.len() == self.config.strfind_max_matches {
                    truncated = true;
                    break;
                }
                let start = i.saturating_sub(ctx);
                let end = (i + needle.len() + ctx).min(text.len());
                matches.push(text[start..end].iter().collect::<String>());
                i += needle.len();
            } else {
                i += 1;
            }
        }
        Ok(Observation {
            payload: Payload::MatchedStrings(matches),
            truncated,
        })
    }

    fn input(&mut self, value: &str, tbox_id: &str) -> Result<Observation, EnvError> {
        let state = self.current()?;
        let el = state
            .page
            .element(tbox_id)
            .ok_or_else(|| EnvError::ElementNotFound(tbox_id.into()))?;
        if el.kind != ElementKind::Textbox {
            return Err(EnvError::ElementNotFound(format!("{tbox_id} is not a textbox")));
        }
        let url = state.page.url.clone();
        self.inputs
            .entry(url)
            .or_default()
            .insert(tbox_id.to_string(), value.to_string());
        Ok(self.page_observation())
    }

    fn click(&mut self, button_id: &str) -> Result<Observation, EnvError> {
        let state = self.current()?;
        let el = state
            .page
            .element(button_id)
            .ok_or_else(|| EnvError::ElementNotFound(button_id.into()))?;
        if el.kind != ElementKind::Button {
            return Err(EnvError::ElementNotFound(format!("{button_id} is not a button")));
        }
        let empty = BTreeMap::new();
        let inputs = self.inputs.get(&state.page.url).unwrap_or(&empty);
        let next = self.backend.activate(&state.page, el, inputs)?;
        if self.blacklist.matches(&next.url) {
            return Err(EnvError::BlacklistedUrl(next.url));
        }
        Ok(self.navigate_to(next))
    }

    fn scroll(&mut self, pixels: i64) -> Result<Observation, EnvError> {
        let budget = self.config.text_budget;
        let per = self.config.chars_per_pixel.max(1) as i64;
        let state = self.current.as_mut().ok_or(EnvError::NoCurrentPage)?;
        let total = state.page.text.chars().count();
        let last_start = total.saturating_sub(budget) as i64;
        let moved = (state.offset as i64).saturating_add(pixels.saturating_mul(per));
        state.offset = moved.clamp(0, last_start) as usize;
        Ok(self.page_observation())
    }

    fn go_back(&mut self) -> Result<Observation, EnvError> {
        let prev = self.history.pop().ok_or(EnvError::EmptyHistory)?;
        self.visited.insert(normalize_url(&prev.page.url));
        self.current = Some(prev);
        Ok(self.page_observation())
    }

    fn file_read(&self, path: &str) -> Result<Observation, EnvError> {
        let blob = self.backend.read_file(path)?;
        let content = if is_text_mime(&blob.mime) {
            String::from_utf8_lossy(&blob.bytes).into_owned()
        } else {
            self.ask_vision(
                "You read files for a browsing agent. Transcribe the readable content of the attached file as plain text. Keep tables as rows of comma-separated values.",
                &format!("File {path} ({})", blob.mime),
                path,
            )?
        };
        let (content, truncated) = char_window(&content, 0, self.config.text_budget);
        Ok(Observation {
            payload: Payload::FileContent(FileContent {
                path: path.to_string(),
                mime: blob.mime,
                content,
            }),
            truncated,
        })
    }

    fn caption(&self, path: &str) -> Result<Observation, EnvError> {
        self.backend.read_file(path)?;
        let description = self.ask_vision(
            "You describe images for a browsing agent. Report every visible number, label and caption exactly.",
            &format!("Describe the image {path}."),
            path,
        )?;
        let (description, truncated) = char_window(&description, 0, self.config.text_budget);
        Ok(Observation {
            payload: Payload::ImageDescription {
                path: path.to_string(),
                description,
            },
            truncated,
        })
    }

    fn ask_vision(&self, system: &str, user: &str, attachment: &str) -> Result<String, EnvError> {
        let gw = self
            .vision
            .as_ref()
            .ok_or_else(|| EnvError::Model("no vision model configured".into()))?;
        let req = ChatRequest::new(
            self.config.vision_model_tag.clone(),
            vec![ChatMessage::system(system), ChatMessage::user(user).with_attachment(attachment)],
        );
        gw.complete(&req)
            .map(|r| r.text)
            .map_err(|e| EnvError::Model(e.to_string()))
    }

    fn compute(&self, expr: &str) -> Result<Observation, EnvError> {
        let parsed = parse_expr(expr).map_err(|e| EnvError::Compute(e.to_string()))?;
        let value = Evaluator::new(self.config.compute_precision)
            .eval(&parsed, &Env::new())
            .map_err(|e| EnvError::Compute(e.to_string()))?;
        let (content, truncated) = char_window(&value.to_string(), 0, self.config.text_budget);
        Ok(Observation {
            payload: Payload::FileContent(FileContent {
                path: "compute".into(),
                mime: "text/plain".into(),
                content,
            }),
            truncated,
        })
    }
}

fn check_args(call: &ToolCall) -> Result<(), EnvError> {
    let params = call.tool.params();
    for (name, kind) in params {
        let ok = match (call.args.get(*name), kind) {
            (Some(v), ParamKind::Text) => v.as_text().is_some(),
            (Some(v), ParamKind::Int) => v.as_int().is_some(),
            (None, _) => false,
        };
        if !ok {
            return Err(EnvError::InvalidArguments(format!(
                "{} expects {}",
                call.tool.name(),
                call.tool.signature()
            )));
        }
    }
    if let Some(extra) = call.args.keys().find(|k| !params.iter().any(|(n, _)| n == k)) {
        return Err(EnvError::InvalidArguments(format!("unexpected argument {extra}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{ArgValue, ElementRecord, FixtureWorld, LinkRecord, PageRecord, ToolErrorClass};
    use super::*;

    fn world() -> Arc<FixtureWorld> {
        let pages = vec![
            PageRecord {
                url: "https://a.example".into(),
                title: "Alpha".into(),
                text: "x".repeat(50),
                elements: vec![
                    ElementRecord {
                        id: "go-b".into(),
                        kind: ElementKind::Button,
                        label: "B".into(),
                        target: Some("https://b.example".into()),
                    },
                    ElementRecord {
                        id: "q".into(),
                        kind: ElementKind::Textbox,
                        label: "Query".into(),
                        target: None,
                    },
                ],
                links: vec![LinkRecord::Internal("https://b.example".into())],
                attachments: vec![],
                exception: None,
            },
            PageRecord {
                url: "https://b.example".into(),
                title: "Beta".into(),
                text: "Beta page mentions the otter twice: otter.".into(),
                elements: vec![],
                links: vec![],
                attachments: vec![],
                exception: None,
            },
        ];
        Arc::new(
            FixtureWorld::build(pages.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect(), BTreeMap::new())
                .unwrap(),
        )
    }

    fn session(budget: usize) -> EnvSession {
        EnvSession::new(
            world(),
            Toolset::full(),
            Arc::new(Blacklist::default()),
            EnvConfig {
                text_budget: budget,
                ..Default::default()
            },
        )
    }

    fn t(s: &str) -> ArgValue {
        ArgValue::Text(s.into())
    }

    #[test]
    fn visit_lists_elements() {
        let mut s = session(100);
        let o = s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://a.example/")]));
        let Payload::PageView(w) = &o.payload else { panic!("{o:?}") };
        let ids: Vec<_> = w.elements.iter().map(|e| e.element.element_id.as_str()).collect();
        assert_eq!(ids, ["go-b", "q"]);
        assert_eq!(s.current_url(), Some("https://a.example"));
    }

    #[test]
    fn click_goback_and_visited() {
        let mut s = session(100);
        s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://a.example")]));
        let o = s.exec_tool(&ToolCall::new(Tool::Click, vec![t("go-b")]));
        assert_eq!(o.kind(), "page_view");
        assert_eq!(s.current_url(), Some("https://b.example"));
        s.exec_tool(&ToolCall::new(Tool::Goback, vec![]));
        assert_eq!(s.current_url(), Some("https://a.example"));
        let o = s.exec_tool(&ToolCall::new(Tool::Goback, vec![]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::EmptyHistory));
        assert_eq!(s.visited_urls().len(), 2);
    }

    #[test]
    fn missing_element_is_error_observation() {
        let mut s = session(100);
        s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://a.example")]));
        let o = s.exec_tool(&ToolCall::new(Tool::Click, vec![t("no-such-id")]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::ElementNotFound));
        let o = s.exec_tool(&ToolCall::new(Tool::Click, vec![t("q")]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::ElementNotFound));
    }

    #[test]
    fn input_value_shows_in_view() {
        let mut s = session(100);
        s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://a.example")]));
        let o = s.exec_tool(&ToolCall::new(Tool::Input, vec![t("otters"), t("q")]));
        let Payload::PageView(w) = &o.payload else { panic!() };
        assert_eq!(w.elements[1].value.as_deref(), Some("otters"));
    }

    #[test]
    fn scroll_windows() {
        let mut s = session(20);
        let o = s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://a.example")]));
        assert!(o.truncated);
        let o = s.exec_tool(&ToolCall::new(Tool::Scroll, vec![ArgValue::Int(25)]));
        let Payload::PageView(w) = &o.payload else { panic!() };
        assert_eq!((w.offset, w.text.len()), (25, 20));
        let o = s.exec_tool(&ToolCall::new(Tool::Scroll, vec![ArgValue::Int(1000)]));
        let Payload::PageView(w) = &o.payload else { panic!() };
        assert_eq!(w.offset, 30);
        let o = s.exec_tool(&ToolCall::new(Tool::Scroll, vec![ArgValue::Int(-1000)]));
        let Payload::PageView(w) = &o.payload else { panic!() };
        assert_eq!(w.offset, 0);
    }

    #[test]
    fn str_find_context() {
        let mut s = session(100);
        s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://b.example")]));
        let o = s.exec_tool(&ToolCall::new(Tool::StrFind, vec![t("OTTER")]));
        let Payload::MatchedStrings(m) = &o.payload else { panic!() };
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn compute_prints_value() {
        let mut s = session(100);
        let o = s.exec_tool(&ToolCall::new(Tool::Compute, vec![t("mean([2,4,6])")]));
        let Payload::FileContent(f) = &o.payload else { panic!() };
        assert_eq!(f.content, "4");
        let o = s.exec_tool(&ToolCall::new(Tool::Compute, vec![t("mean([])")]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::ComputeError));
    }

    #[test]
    fn toolset_and_arguments_enforced() {
        let mut s = EnvSession::new(world(), Toolset::solver(), Arc::new(Blacklist::default()), EnvConfig::default());
        let o = s.exec_tool(&ToolCall::new(Tool::Screenshot, vec![t("s.png")]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::ToolNotAvailable));
        let o = s.exec_tool(&ToolCall::new(Tool::Visit, vec![ArgValue::Int(3)]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::InvalidArguments));
    }

    #[test]
    fn blacklist_blocks_visit_and_search() {
        let mut s = EnvSession::new(
            world(),
            Toolset::full(),
            Arc::new(Blacklist::new(["b.example"])),
            EnvConfig::default(),
        );
        let o = s.exec_tool(&ToolCall::new(Tool::Visit, vec![t("https://b.example")]));
        assert_eq!(o.error_class(), Some(ToolErrorClass::BlacklistedUrl));
        let o = s.exec_tool(&ToolCall::new(Tool::Search, vec![t("beta otter")]));
        let Payload::SearchResults(h) = &o.payload else { panic!() };
        assert!(h.is_empty());
    }
}
