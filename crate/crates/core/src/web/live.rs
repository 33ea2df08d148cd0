use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use reqwest::blocking::Client;
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use url::Url;

use super::page::{Attachment, Behavior, ElementKind, FileBlob, InteractiveElement, PageView, SearchHit};
use super::{normalize_url, Blacklist, EnvError, WebBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveWebConfig {
    /// JSON search endpoint; `{query}` is replaced by the encoded query.
    pub search_url: String,
    /// W3C WebDriver server, used only for script-driven elements.
    pub webdriver_url: Option<String>,
    pub timeout_secs: u64,
    pub fetch_attempts: u32,
    pub user_agent: String,
    /// Lowercase markers that identify a challenge page.
    pub captcha_markers: Vec<String>,
    pub cache: bool,
}

impl Default for LiveWebConfig {
    fn default() -> Self {
        Self {
            search_url: "http://127.0.0.1:8888/search?format=json&q={query}".into(),
            webdriver_url: None,
            timeout_secs: 30,
            fetch_attempts: 2,
            user_agent: "webagg/0.1".into(),
            captcha_markers: vec![
                "captcha".into(),
                "are you a robot".into(),
                "unusual traffic".into(),
            ],
            cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    url: String,
    tool: &'static str,
    args: String,
}

#[derive(Debug, Clone)]
enum Cached {
    Page(PageView),
    Hits(Vec<SearchHit>),
    File(FileBlob),
}

/// Shared cache of successful live fetches.
#[derive(Debug, Default)]
pub struct FetchCache {
    entries: Mutex<HashMap<CacheKey, Cached>>,
}

impl FetchCache {
    fn get(&self, key: &CacheKey) -> Option<Cached> {
        self.entries.lock().expect("fetch cache poisoned").get(key).cloned()
    }

    fn put(&self, key: CacheKey, value: Cached) {
        self.entries.lock().expect("fetch cache poisoned").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("fetch cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Plain HTTP for static pages, WebDriver for scripted elements.
pub struct LiveWeb {
    config: LiveWebConfig,
    client: Client,
    cache: FetchCache,
    driver: Option<Mutex<WebDriverClient>>,
}

impl std::fmt::Debug for LiveWeb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveWeb").field("config", &self.config).finish_non_exhaustive()
    }
}

fn exception(msg: impl Into<String>) -> EnvError {
    EnvError::EnvironmentException(msg.into())
}

impl LiveWeb {
    pub fn new(config: LiveWebConfig) -> Result<Self, EnvError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .user_agent(config.user_agent.clone())
            .build()
            .map_err(|e| exception(format!("http client: {e}")))?;
        let driver = config
            .webdriver_url
            .as_ref()
            .map(|u| Mutex::new(WebDriverClient::new(client.clone(), u)));
        Ok(Self {
            config,
            client,
            cache: FetchCache::default(),
            driver,
        })
    }

    pub fn cache(&self) -> &FetchCache {
        &self.cache
    }

    fn cached<T>(
        &self,
        key: CacheKey,
        unwrap: impl Fn(Cached) -> Option<T>,
        wrap: impl Fn(&T) -> Cached,
        load: impl FnOnce() -> Result<T, EnvError>,
    ) -> Result<T, EnvError> {
        if self.config.cache {
            if let Some(hit) = self.cache.get(&key).and_then(&unwrap) {
                return Ok(hit);
            }
        }
        let value = load()?;
        if self.config.cache {
            self.cache.put(key, wrap(&value));
        }
        Ok(value)
    }

    fn get(&self, url: &str) -> Result<reqwest::blocking::Response, EnvError> {
        let mut last = String::new();
        for _ in 0..self.config.fetch_attempts.max(1) {
            match self.client.get(url).send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    return match status {
                        200..=299 => Ok(resp),
                        403 | 429 => Err(exception(format!("access challenge (HTTP {status}) at {url}"))),
                        404 | 410 => Err(EnvError::UnknownUrl(url.to_string())),
                        _ if status >= 500 => {
                            last = format!("HTTP {status}");
                            continue;
                        }
                        _ => Err(EnvError::UnknownUrl(format!("{url} (HTTP {status})"))),
                    };
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(exception(format!("fetch failed for {url}: {last}")))
    }

    fn load_page(&self, url: &str) -> Result<PageView, EnvError> {
        let resp = self.get(url)?;
        let final_url = resp.url().to_string();
        let body = resp.text().map_err(|e| exception(format!("reading {url}: {e}")))?;
        self.parse_checked(&final_url, &body)
    }

    fn parse_checked(&self, url: &str, html: &str) -> Result<PageView, EnvError> {
        let page = parse_html(url, html);
        let probe = format!("{} {}", page.title, page.text.chars().take(2000).collect::<String>()).to_lowercase();
        if self.config.captcha_markers.iter().any(|m| probe.contains(m.as_str())) {
            return Err(exception(format!("captcha detected at {url}")));
        }
        Ok(page)
    }
}

impl WebBackend for LiveWeb {
    fn search(&self, query: &str, limit: usize, exclude: &Blacklist) -> Result<Vec<SearchHit>, EnvError> {
        let encoded: String = url::form_urlencoded::byte_serialize(query.as_bytes()).collect();
        let endpoint = self.config.search_url.replace("{query}", &encoded);
        let key = CacheKey {
            url: endpoint.clone(),
            tool: "Search",
            args: query.to_string(),
        };
        let hits = self.cached(
            key,
            |c| match c {
                Cached::Hits(h) => Some(h),
                _ => None,
            },
            |h| Cached::Hits(h.clone()),
            || {
                let body: Json = self
                    .get(&endpoint)?
                    .json()
                    .map_err(|e| exception(format!("search response: {e}")))?;
                Ok(parse_search_results(&body))
            },
        )?;
        Ok(hits.into_iter().filter(|h| !exclude.matches(&h.url)).take(limit).collect())
    }

    fn fetch(&self, url: &str) -> Result<PageView, EnvError> {
        let url = normalize_url(url);
        let key = CacheKey {
            url: url.clone(),
            tool: "Visit",
            args: String::new(),
        };
        self.cached(
            key,
            |c| match c {
                Cached::Page(p) => Some(p),
                _ => None,
            },
            |p| Cached::Page(p.clone()),
            || self.load_page(&url),
        )
    }

    fn activate(
        &self,
        page: &PageView,
        element: &InteractiveElement,
        inputs: &BTreeMap<String, String>,
    ) -> Result<PageView, EnvError> {
        match &element.behavior {
            Behavior::Navigate(target) if inputs.is_empty() => self.fetch(target),
            Behavior::Navigate(target) => {
                let mut u = Url::parse(target).map_err(|e| EnvError::InvalidArguments(e.to_string()))?;
                u.query_pairs_mut().extend_pairs(inputs.iter());
                self.fetch(u.as_str())
            }
            Behavior::Store => Err(EnvError::ElementNotFound(format!(
                "{} is not clickable",
                element.element_id
            ))),
            Behavior::Script(selector) => {
                let driver = self
                    .driver
                    .as_ref()
                    .ok_or_else(|| exception("dynamic element requires a WebDriver server"))?;
                let mut driver = driver.lock().expect("webdriver poisoned");
                driver.navigate(&page.url)?;
                for (id, value) in inputs {
                    if let Some(InteractiveElement {
                        behavior: Behavior::Script(sel),
                        ..
                    }) = page.element(id)
                    {
                        let el = driver.find(sel)?;
                        driver.send_keys(&el, value)?;
                    }
                }
                let el = driver.find(selector)?;
                driver.click(&el)?;
                let url = driver.current_url()?;
                let html = driver.source()?;
                self.parse_checked(&url, &html)
            }
        }
    }

    fn read_file(&self, path: &str) -> Result<FileBlob, EnvError> {
        if !(path.starts_with("http://") || path.starts_with("https://")) {
            let bytes = std::fs::read(path).map_err(|_| EnvError::FileMissing(path.to_string()))?;
            return Ok(FileBlob {
                path: path.to_string(),
                mime: guess_mime(path).to_string(),
                bytes,
            });
        }
        let key = CacheKey {
            url: path.to_string(),
            tool: "FileRead",
            args: String::new(),
        };
        self.cached(
            key,
            |c| match c {
                Cached::File(f) => Some(f),
                _ => None,
            },
            |f| Cached::File(f.clone()),
            || {
                let resp = self.get(path).map_err(|e| match e {
                    EnvError::UnknownUrl(_) => EnvError::FileMissing(path.to_string()),
                    other => other,
                })?;
                let mime = resp
                    .headers()
                    .get(reqwest::header::CONTENT_TYPE)
                    .and_then(|v| v.to_str().ok())
                    .map(|v| v.split(';').next().unwrap_or(v).trim().to_string())
                    .unwrap_or_else(|| guess_mime(path).to_string());
                let bytes = resp.bytes().map_err(|e| exception(e.to_string()))?.to_vec();
                Ok(FileBlob {
                    path: path.to_string(),
                    mime,
                    bytes,
                })
            },
        )
    }
}

pub(crate) fn parse_search_results(body: &Json) -> Vec<SearchHit> {
    body.get("results")
        .and_then(Json::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|r| {
                    Some(SearchHit {
                        url: normalize_url(r.get("url")?.as_str()?),
                        title: r.get("title").and_then(Json::as_str).unwrap_or_default().to_string(),
                        snippet: r
                            .get("content")
                            .or_else(|| r.get("snippet"))
                            .and_then(Json::as_str)
                            .unwrap_or_default()
                            .to_string(),
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

fn guess_mime(path: &str) -> &'static str {
    let lower = path.to_ascii_lowercase();
    let ext = lower.rsplit('.').next().unwrap_or_default();
    match ext {
        "csv" => "text/csv",
        "txt" => "text/plain",
        "json" => "application/json",
        "html" | "htm" => "text/html",
        "pdf" => "application/pdf",
        "xlsx" => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        "xls" => "application/vnd.ms-excel",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        _ => "application/octet-stream",
    }
}

const FILE_EXTENSIONS: [&str; 8] = ["csv", "pdf", "xlsx", "xls", "png", "jpg", "jpeg", "json"];

fn sel(s: &str) -> Selector {
    Selector::parse(s).expect("static selector")
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn element_text(e: &ElementRef<'_>) -> String {
    collapse(&e.text().collect::<Vec<_>>().join(" "))
}

/// Extracts title, visible text, links, files and form controls.
pub fn parse_html(url: &str, html: &str) -> PageView {
    let doc = Html::parse_document(html);
    let base = Url::parse(url).ok();
    let resolve = |href: &str| -> Option<String> {
        let joined = match &base {
            Some(b) => b.join(href).ok()?,
            None => Url::parse(href).ok()?,
        };
        matches!(joined.scheme(), "http" | "https").then(|| normalize_url(joined.as_str()))
    };

    let title = doc
        .select(&sel("title"))
        .next()
        .map(|t| element_text(&t))
        .unwrap_or_default();

    let skip = sel("script, style, noscript, template");
    let hidden: Vec<_> = doc.select(&skip).map(|e| e.id()).collect();
    let mut pieces = Vec::new();
    if let Some(body) = doc.select(&sel("body")).next() {
        for node in body.descendants() {
            if let Some(text) = node.value().as_text() {
                if node.ancestors().any(|a| hidden.contains(&a.id())) {
                    continue;
                }
                let t = text.trim();
                if !t.is_empty() {
                    pieces.push(t.to_string());
                }
            }
        }
    }
    let text = collapse(&pieces.join(" "));

    let mut outlinks = Vec::new();
    let mut attachments = Vec::new();
    for a in doc.select(&sel("a[href]")) {
        let Some(href) = a.value().attr("href").and_then(resolve) else {
            continue;
        };
        let ext = href.rsplit('.').next().unwrap_or_default().to_ascii_lowercase();
        if FILE_EXTENSIONS.contains(&ext.as_str()) {
            if !attachments.iter().any(|x: &Attachment| x.path == href) {
                attachments.push(Attachment {
                    mime: guess_mime(&href).to_string(),
                    path: href,
                });
            }
        } else if !outlinks.contains(&href) {
            outlinks.push(href);
        }
    }

    let mut dom_outline = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    let controls = sel("button, input, textarea");
    for (n, e) in doc.select(&controls).enumerate() {
        let v = e.value();
        let input_type = v.attr("type").unwrap_or("text").to_ascii_lowercase();
        let kind = match (v.name(), input_type.as_str()) {
            ("button", _) | ("input", "submit" | "button") => ElementKind::Button,
            ("textarea", _) | ("input", "text" | "search" | "email" | "number" | "url" | "tel") => {
                ElementKind::Textbox
            }
            _ => continue,
        };
        let prefix = if kind == ElementKind::Button { "btn" } else { "tb" };
        let mut id = v
            .attr("id")
            .or_else(|| v.attr("name"))
            .map(str::to_owned)
            .unwrap_or_else(|| format!("{prefix}-{n}"));
        if !used.insert(id.clone()) {
            id = format!("{id}-{n}");
            used.insert(id.clone());
        }
        let label = [element_text(&e), v.attr("value").unwrap_or_default().to_string()]
            .into_iter()
            .chain(["aria-label", "placeholder", "name"].iter().map(|k| v.attr(k).unwrap_or_default().to_string()))
            .find(|s| !s.is_empty())
            .unwrap_or_default();
        let selector = match v.attr("id") {
            Some(i) => format!("#{i}"),
            None => match v.attr("name") {
                Some(name) => format!("{}[name=\"{name}\"]", v.name()),
                None => format!("{}:nth-of-type({})", v.name(), n + 1),
            },
        };
        let form_action = e
            .ancestors()
            .filter_map(ElementRef::wrap)
            .find(|a| a.value().name() == "form")
            .filter(|f| f.value().attr("method").is_none_or(|m| m.eq_ignore_ascii_case("get")))
            .and_then(|f| resolve(f.value().attr("action").unwrap_or(url)));
        let behavior = match (kind, form_action) {
            (ElementKind::Textbox, _) => Behavior::Script(selector),
            (ElementKind::Button, Some(target)) => Behavior::Navigate(target),
            (ElementKind::Button, None) => Behavior::Script(selector),
        };
        dom_outline.push(InteractiveElement {
            element_id: id,
            kind,
            label,
            behavior,
        });
    }

    PageView {
        url: normalize_url(url),
        title,
        text,
        dom_outline,
        outlinks,
        attachments,
    }
}

const ELEMENT_KEY: &str = "element-6066-11e4-a52e-4f735466cecf";

/// Minimal W3C WebDriver client: one lazily created headless session.
pub struct WebDriverClient {
    client: Client,
    base: String,
    session: Option<String>,
}

impl std::fmt::Debug for WebDriverClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WebDriverClient")
            .field("base", &self.base)
            .field("session", &self.session)
            .finish()
    }
}

impl WebDriverClient {
    pub fn new(client: Client, base: &str) -> Self {
        Self {
            client,
            base: base.trim_end_matches('/').to_string(),
            session: None,
        }
    }

    fn call(&self, method: reqwest::Method, path: &str, body: Option<Json>) -> Result<Json, EnvError> {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().map_err(|e| exception(format!("webdriver: {e}")))?;
        let status = resp.status();
        let body: Json = resp.json().map_err(|e| exception(format!("webdriver body: {e}")))?;
        let value = body.get("value").cloned().unwrap_or(Json::Null);
        if !status.is_success() {
            let err = value.get("error").and_then(Json::as_str).unwrap_or("unknown error");
            if err == "no such element" {
                return Err(EnvError::ElementNotFound(
                    value.get("message").and_then(Json::as_str).unwrap_or(err).to_string(),
                ));
            }
            return Err(exception(format!("webdriver {err}")));
        }
        Ok(value)
    }

    fn session_id(&mut self) -> Result<String, EnvError> {
        if let Some(id) = &self.session {
            return Ok(id.clone());
        }
        let caps = json!({"capabilities": {"alwaysMatch": {
            "browserName": "chrome",
            "goog:chromeOptions": {"args": ["--headless=new", "--disable-gpu"]},
            "moz:firefoxOptions": {"args": ["-headless"]}
        }}});
        let v = self.call(reqwest::Method::POST, "/session", Some(caps))?;
        let id = v
            .get("sessionId")
            .and_then(Json::as_str)
            .ok_or_else(|| exception("webdriver returned no session id"))?
            .to_string();
        self.session = Some(id.clone());
        Ok(id)
    }

    pub fn navigate(&mut self, url: &str) -> Result<(), EnvError> {
        let s = self.session_id()?;
        self.call(reqwest::Method::POST, &format!("/session/{s}/url"), Some(json!({"url": url})))?;
        Ok(())
    }

    pub fn find(&mut self, css: &str) -> Result<String, EnvError> {
        let s = self.session_id()?;
        let v = self.call(
            reqwest::Method::POST,
            &format!("/session/{s}/element"),
            Some(json!({"using": "css selector", "value": css})),
        )?;
        v.get(ELEMENT_KEY)
            .and_then(Json::as_str)
            .map(str::to_owned)
            .ok_or_else(|| EnvError::ElementNotFound(css.to_string()))
    }

    pub fn click(&mut self, element: &str) -> Result<(), EnvError> {
        let s = self.session_id()?;
        self.call(
            reqwest::Method::POST,
            &format!("/session/{s}/element/{element}/click"),
            Some(json!({})),
        )?;
        Ok(())
    }

    pub fn send_keys(&mut self, element: &str, text: &str) -> Result<(), EnvError> {
        let s = self.session_id()?;
        self.call(
            reqwest::Method::POST,
            &format!("/session/{s}/element/{element}/value"),
            Some(json!({"text": text})),
        )?;
        Ok(())
    }

    pub fn current_url(&mut self) -> Result<String, EnvError> {
        let s = self.session_id()?;
        let v = self.call(reqwest::Method::GET, &format!("/session/{s}/url"), None)?;
        Ok(v.as_str().unwrap_or_default().to_string())
    }

    pub fn source(&mut self) -> Result<String, EnvError> {
        let s = self.session_id()?;
        let v = self.call(reqwest::Method::GET, &format!("/session/{s}/source"), None)?;
        Ok(v.as_str().unwrap_or_default().to_string())
    }
}

impl Drop for WebDriverClient {
    fn drop(&mut self) {
        if let Some(s) = self.session.take() {
            let _ = self.call(reqwest::Method::DELETE, &format!("/session/{s}"), None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HTML: &str = r#"<html><head><title> Club  Stats </title><script>var x = "hidden";</script></head>
<body><h1>Season</h1><p>Won 50 games.</p>
<a href="/roster">Roster</a> <a href="https://other.example/x#top">Other</a>
<a href="/files/wins.csv">CSV</a>
<form action="/search" method="get"><input type="text" name="q" placeholder="Search"><button id="go">Go</button></form>
<button id="more">Load more</button>
</body></html>"#;

    #[test]
    fn html_extraction() {
        let p = parse_html("https://Club.example/stats/", HTML);
        assert_eq!(p.url, "https://club.example/stats");
        assert_eq!(p.title, "Club Stats");
        assert!(p.text.contains("Won 50 games."));
        assert!(!p.text.contains("hidden"));
        assert_eq!(p.outlinks, ["https://club.example/roster", "https://other.example/x"]);
        assert_eq!(p.attachments[0].mime, "text/csv");
        let ids: Vec<_> = p.dom_outline.iter().map(|e| e.element_id.as_str()).collect();
        assert_eq!(ids, ["q", "go", "more"]);
        assert_eq!(p.dom_outline[1].behavior, Behavior::Navigate("https://club.example/search".into()));
        assert_eq!(p.dom_outline[2].behavior, Behavior::Script("#more".into()));
    }

    #[test]
    fn search_json() {
        let body = json!({"results": [
            {"url": "https://A.example/", "title": "A", "content": "alpha"},
            {"title": "no url"}
        ]});
        let hits = parse_search_results(&body);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].url, "https://a.example");
    }
}
