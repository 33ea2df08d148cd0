//! The live page source against a local HTTP server.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use webagg_core::web::{Blacklist, EnvError, LiveWeb, LiveWebConfig, WebBackend};

struct Server {
    base: String,
    hits: Arc<AtomicUsize>,
}

fn respond(path: &str, base: &str) -> (&'static str, &'static str, String) {
    match path {
        p if p.starts_with("/search") => (
            "200 OK",
            "application/json",
            format!(
                r#"{{"results": [
                    {{"url": "{base}/stats", "title": "Stats", "content": "season"}},
                    {{"url": "https://huggingface.co/datasets/x", "title": "Mirror", "content": "copy"}},
                    {{"url": "{base}/roster/", "title": "Roster", "content": "players"}}
                ]}}"#
            ),
        ),
        "/stats" => (
            "200 OK",
            "text/html",
            r#"<html><head><title>Stats</title></head><body><p>Won 50 games.</p><a href="/roster">Roster</a><a href="/files/wins.csv">CSV</a></body></html>"#.into(),
        ),
        "/files/wins.csv" => ("200 OK", "text/csv", "season,wins\n2024,50\n".into()),
        "/verify" => (
            "200 OK",
            "text/html",
            "<html><head><title>Check</title></head><body>Complete the CAPTCHA to continue.</body></html>".into(),
        ),
        _ => ("404 Not Found", "text/plain", "missing".into()),
    }
}

fn serve() -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let (b, h) = (base.clone(), hits.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut line = String::new();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).unwrap_or(0) == 0 || header == "\r\n" {
                    break;
                }
            }
            h.fetch_add(1, Ordering::SeqCst);
            let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let (status, mime, body) = respond(&path, &b);
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Server { base, hits }
}

fn live(server: &Server) -> LiveWeb {
    LiveWeb::new(LiveWebConfig {
        search_url: format!("{}/search?q={{query}}", server.base),
        timeout_secs: 5,
        fetch_attempts: 1,
        ..LiveWebConfig::default()
    })
    .unwrap()
}

#[test]
fn search_filters_blacklist_before_limit() {
    let server = serve();
    let web = live(&server);
    let hits = web.search("club stats", 2, &Blacklist::new(["huggingface"])).unwrap();
    let urls: Vec<&str> = hits.iter().map(|h| h.url.as_str()).collect();
    assert_eq!(urls, [format!("{}/stats", server.base), format!("{}/roster", server.base)]);
}

#[test]
fn fetch_parses_and_caches() {
    let server = serve();
    let web = live(&server);
    let page = web.fetch(&format!("{}/stats", server.base)).unwrap();
    assert_eq!(page.title, "Stats");
    assert!(page.text.contains("Won 50 games."));
    assert_eq!(page.attachments.len(), 1);
    let before = server.hits.load(Ordering::SeqCst);
    web.fetch(&format!("{}/stats", server.base)).unwrap();
    assert_eq!(server.hits.load(Ordering::SeqCst), before);
    assert_eq!(web.cache().len(), 1);

    let file = web.read_file(&page.attachments[0].path).unwrap();
    assert_eq!(file.mime, "text/csv");
    assert_eq!(file.bytes, b"season,wins\n2024,50\n");
}

#[test]
fn challenge_and_missing_pages_are_errors() {
    let server = serve();
    let web = live(&server);
    assert!(matches!(
        web.fetch(&format!("{}/verify", server.base)),
        Err(EnvError::EnvironmentException(m)) if m.contains("captcha")
    ));
    assert!(web.fetch(&format!("{}/nowhere", server.base)).is_err());
    assert!(web.cache().is_empty());
}
