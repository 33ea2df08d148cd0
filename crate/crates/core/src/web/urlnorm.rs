use url::Url;

/// Canonical form used for every URL comparison: lowercase scheme and host,
/// no fragment, no trailing slash. Query strings are kept.
pub fn normalize_url(raw: &str) -> String {
    let raw = raw.trim();
    match Url::parse(raw) {
        Ok(u) if u.host_str().is_some() => {
            let mut out = format!("{}://{}", u.scheme(), u.host_str().unwrap_or_default());
            if let Some(port) = u.port() {
                out.push_str(&format!(":{port}"));
            }
            out.push_str(u.path().trim_end_matches('/'));
            if let Some(q) = u.query() {
                out.push('?');
                out.push_str(q);
            }
            out
        }
        _ => {
            let no_frag = raw.split('#').next().unwrap_or_default();
            no_frag.trim_end_matches('/').to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(normalize_url("HTTPS://Example.COM/"), "https://example.com");
        assert_eq!(normalize_url("https://example.com/a/b/"), "https://example.com/a/b");
        assert_eq!(normalize_url("https://example.com/a#frag"), "https://example.com/a");
        assert_eq!(normalize_url("https://example.com/a?x=1"), "https://example.com/a?x=1");
        assert_ne!(normalize_url("https://e.com/a?x=1"), normalize_url("https://e.com/a?x=2"));
        assert_eq!(normalize_url("https://e.com:8080/p/"), "https://e.com:8080/p");
        assert_eq!(normalize_url("  not a url/ "), "not a url");
    }

    #[test]
    fn path_case_is_significant() {
        assert_ne!(normalize_url("https://e.com/A"), normalize_url("https://e.com/a"));
    }

    #[test]
    fn idempotent() {
        for u in ["HTTP://X.org/a/", "https://y.net/?q=1#z", "https://z.io"] {
            let once = normalize_url(u);
            assert_eq!(normalize_url(&once), once);
        }
    }
}
