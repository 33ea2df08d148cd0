//! The browsing environment: tools, observations and two interchangeable
//! page sources (a fixture world and the live web).

mod blacklist;
mod fixture;
mod live;
mod observation;
mod page;
mod session;
mod tools;
mod urlnorm;

use std::collections::BTreeMap;

use thiserror::Error;

pub use blacklist::{is_blacklisted, Blacklist};
pub use fixture::{
    load_fixture, tokenize, ElementRecord, FixtureError, FixtureWorld, LinkRecord, PageRecord,
    SearchScoring,
};
pub use live::{FetchCache, LiveWeb, LiveWebConfig, WebDriverClient};
pub use observation::{
    char_window, ElementState, FileContent, Observation, PageWindow, Payload, ToolErrorClass,
};
pub use page::{
    is_image_mime, is_text_mime, Attachment, Behavior, ElementKind, FileBlob, InteractiveElement,
    PageView, SearchHit,
};
pub use session::{EnvConfig, EnvFactory, EnvSession};
pub use tools::{quote, render_call, ArgValue, ParamKind, Tool, ToolCall, Toolset};
pub use urlnorm::normalize_url;

/// Typed tool failures. Sessions turn these into `tool_error` observations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("unknown URL {0}")]
    UnknownUrl(String),
    #[error("element not found: {0}")]
    ElementNotFound(String),
    #[error("navigation history is empty")]
    EmptyHistory,
    #[error("file not found: {0}")]
    FileMissing(String),
    #[error("URL is blacklisted: {0}")]
    BlacklistedUrl(String),
    #[error("environment exception: {0}")]
    EnvironmentException(String),
    #[error("no page is open")]
    NoCurrentPage,
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("tool {0} is not available in this session")]
    ToolNotAvailable(String),
    #[error("{0}")]
    Compute(String),
    #[error("model call failed: {0}")]
    Model(String),
}

impl EnvError {
    pub fn class(&self) -> ToolErrorClass {
        match self {
            EnvError::UnknownUrl(_) => ToolErrorClass::UnknownUrl,
            EnvError::ElementNotFound(_) => ToolErrorClass::ElementNotFound,
            EnvError::EmptyHistory => ToolErrorClass::EmptyHistory,
            EnvError::FileMissing(_) => ToolErrorClass::FileMissing,
            EnvError::BlacklistedUrl(_) => ToolErrorClass::BlacklistedUrl,
            EnvError::EnvironmentException(_) => ToolErrorClass::EnvironmentException,
            EnvError::NoCurrentPage => ToolErrorClass::NoCurrentPage,
            EnvError::InvalidArguments(_) => ToolErrorClass::InvalidArguments,
            EnvError::ToolNotAvailable(_) => ToolErrorClass::ToolNotAvailable,
            EnvError::Compute(_) => ToolErrorClass::ComputeError,
            EnvError::Model(_) => ToolErrorClass::ModelError,
        }
    }

    pub fn into_observation(self) -> Observation {
        Observation::error(self.class(), self.to_string())
    }
}

/// A source of pages: the fixture world or the live web.
pub trait WebBackend: Send + Sync {
    /// Ranked hits with blacklisted URLs removed before `limit` applies.
    fn search(&self, query: &str, limit: usize, exclude: &Blacklist) -> Result<Vec<SearchHit>, EnvError>;
    fn fetch(&self, url: &str) -> Result<PageView, EnvError>;
    /// Clicks `element` on `page`; `inputs` holds values typed on that page.
    fn activate(
        &self,
        page: &PageView,
        element: &InteractiveElement,
        inputs: &BTreeMap<String, String>,
    ) -> Result<PageView, EnvError>;
    fn read_file(&self, path: &str) -> Result<FileBlob, EnvError>;
}
