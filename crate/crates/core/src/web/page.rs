use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Button,
    Textbox,
}

/// What happens when an element is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Clicking loads the target URL.
    Navigate(String),
    /// Input is kept as the element's value.
    Store,
    /// Needs a real browser; the selector locates the element.
    Script(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractiveElement {
    pub element_id: String,
    pub kind: ElementKind,
    pub label: String,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub path: String,
    pub mime: String,
}

impl Attachment {
    pub fn is_text(&self) -> bool {
        is_text_mime(&self.mime)
    }
}

pub fn is_text_mime(mime: &str) -> bool {
    let m = mime.to_ascii_lowercase();
    m.starts_with("text/") || m == "application/json" || m.ends_with("+json") || m == "application/csv"
}

pub fn is_image_mime(mime: &str) -> bool {
    mime.to_ascii_lowercase().starts_with("image/")
}

/// A loaded page as the environment sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageView {
    pub url: String,
    pub title: String,
    pub text: String,
    pub dom_outline: Vec<InteractiveElement>,
    pub outlinks: Vec<String>,
    pub attachments: Vec<Attachment>,
}

impl PageView {
    pub fn element(&self, id: &str) -> Option<&InteractiveElement> {
        self.dom_outline.iter().find(|e| e.element_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileBlob {
    pub path: String,
    pub mime: String,
    pub bytes: Vec<u8>,
}
