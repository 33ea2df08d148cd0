use std::fmt;

use serde::{Deserialize, Serialize};

use super::page::{Attachment, InteractiveElement, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorClass {
    UnknownUrl,
    ElementNotFound,
    EmptyHistory,
    FileMissing,
    BlacklistedUrl,
    EnvironmentException,
    NoCurrentPage,
    InvalidArguments,
    ToolNotAvailable,
    ComputeError,
    ModelError,
}

impl fmt::Display for ToolErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

/// A text window over a page plus its interactive outline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageWindow {
    pub url: String,
    pub title: String,
    pub text: String,
    pub offset: usize,
    pub total_chars: usize,
    pub elements: Vec<ElementState>,
    pub outlinks: Vec<String>,
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementState {
    #[serde(flatten)]
    pub element: InteractiveElement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileContent {
    pub path: String,
    pub mime: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    SearchResults(Vec<SearchHit>),
    PageView(PageWindow),
    MatchedStrings(Vec<String>),
    FileContent(FileContent),
    ScreenshotReceipt { path: String, url: Option<String> },
    ImageDescription { path: String, description: String },
    ToolError { class: ToolErrorClass, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(flatten)]
    pub payload: Payload,
    pub truncated: bool,
}

impl Observation {
    pub fn new(payload: Payload) -> Self {
        Self {
            payload,
            truncated: false,
        }
    }

    pub fn error(class: ToolErrorClass, message: impl Into<String>) -> Self {
        Self::new(Payload::ToolError {
            class,
            message: message.into(),
        })
    }

    pub fn kind(&self) -> &'static str {
        match &self.payload {
            Payload::SearchResults(_) => "search_results",
            Payload::PageView(_) => "page_view",
            Payload::MatchedStrings(_) => "matched_strings",
            Payload::FileContent(_) => "file_content",
            Payload::ScreenshotReceipt { .. } => "screenshot_receipt",
            Payload::ImageDescription { .. } => "image_description",
            Payload::ToolError { .. } => "tool_error",
        }
    }

    pub fn error_class(&self) -> Option<ToolErrorClass> {
        match &self.payload {
            Payload::ToolError { class, .. } => Some(*class),
            _ => None,
        }
    }

    pub fn is_environment_exception(&self) -> bool {
        self.error_class() == Some(ToolErrorClass::EnvironmentException)
    }

    /// Plain-text form given to the model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.payload {
            Payload::SearchResults(hits) => {
                if hits.is_empty() {
                    out.push_str("No results.");
                }
                for (i, h) in hits.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push_str(&format!("{}. {}\n   {}\n   {}", i + 1, h.title, h.url, h.snippet));
                }
            }
            Payload::PageView(w) => {
                out.push_str(&format!("URL: {}\nTitle: {}\n", w.url, w.title));
                let end = w.offset + w.text.chars().count();
                out.push_str(&format!("Text [{}..{} of {}]:\n{}\n", w.offset, end, w.total_chars, w.text));
                if !w.elements.is_empty() {
                    out.push_str("Elements:\n");
                    for e in &w.elements {
                        let kind = match e.element.kind {
                            super::ElementKind::Button => "button",
                            super::ElementKind::Textbox => "textbox",
                        };
                        out.push_str(&format!("  [{}] {} \"{}\"", e.element.element_id, kind, e.element.label));
                        if let Some(v) = &e.value {
                            out.push_str(&format!(" value=\"{v}\""));
                        }
                        out.push('\n');
                    }
                }
                if !w.outlinks.is_empty() {
                    out.push_str("Links:\n");
                    for l in &w.outlinks {
                        out.push_str(&format!("  {l}\n"));
                    }
                }
                if !w.attachments.is_empty() {
                    out.push_str("Attachments:\n");
                    for a in &w.attachments {
                        out.push_str(&format!("  {} ({})\n", a.path, a.mime));
                    }
                }
                while out.ends_with('\n') {
                    out.pop();
                }
            }
            Payload::MatchedStrings(m) => {
                if m.is_empty() {
                    out.push_str("No matches.");
                }
                for (i, s) in m.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push_str(&format!("[{}] ...{}...", i + 1, s));
                }
            }
            Payload::FileContent(f) => {
                out.push_str(&format!("File: {} ({})\n{}", f.path, f.mime, f.content));
            }
            Payload::ScreenshotReceipt { path, url } => {
                out.push_str(&format!(
                    "Screenshot saved to {path} (page: {})",
                    url.as_deref().unwrap_or("none")
                ));
            }
            Payload::ImageDescription { path, description } => {
                out.push_str(&format!("Image {path}: {description}"));
            }
            Payload::ToolError { class, message } => {
                out.push_str(&format!("Error [{class}]: {message}"));
            }
        }
        if self.truncated {
            out.push_str("\n[truncated]");
        }
        out
    }
}

/// Returns the char-window `[start, start+budget)` of `s`.
pub fn char_window(s: &str, start: usize, budget: usize) -> (String, bool) {
    let total = s.chars().count();
    let start = start.min(total);
    let text: String = s.chars().skip(start).take(budget).collect();
    let clipped = start > 0 || start + budget < total;
    (text, clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let o = Observation::error(ToolErrorClass::ElementNotFound, "no element x");
        let v = serde_json::to_value(&o).unwrap();
        assert_eq!(v["kind"], "tool_error");
        assert_eq!(v["payload"]["class"], "element_not_found");
        assert_eq!(v["truncated"], false);
        let back: Observation = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn window_flags() {
        assert_eq!(char_window("abcdef", 0, 10), ("abcdef".into(), false));
        assert_eq!(char_window("abcdef", 0, 3), ("abc".into(), true));
        assert_eq!(char_window("abcdef", 3, 3), ("def".into(), true));
        assert_eq!(char_window("héllo", 1, 2), ("él".into(), true));
    }

    #[test]
    fn class_display() {
        assert_eq!(ToolErrorClass::EnvironmentException.to_string(), "environment_exception");
    }
}
