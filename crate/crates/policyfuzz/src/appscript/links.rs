//! Link extraction from response bodies: `href="..."` / `src="..."`
//! attribute values and `fetch("...")` string literals, in order of
//! appearance, resolved against the request path.

use std::sync::OnceLock;

use regex::Regex;

use crate::http::HttpResponse;

fn link_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?:href|src)\s*=\s*"([^"]*)"|fetch\(\s*"([^"]*)"\s*\)"#)
            .expect("static regex compiles")
    })
}

/// URLs referenced by a response body. Non-text bodies yield nothing;
/// scheme-qualified URLs are skipped (they cannot be routed back into the
/// app under test).
pub fn extract_links(resp: &HttpResponse) -> Vec<String> {
    let Ok(text) = std::str::from_utf8(resp.body()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for caps in link_regex().captures_iter(text) {
        let raw = caps
            .get(1)
            .or_else(|| caps.get(2))
            .map(|m| m.as_str())
            .unwrap_or("");
        if raw.is_empty() || raw.contains("://") {
            continue;
        }
        out.push(raw.to_string());
    }
    out
}

/// Resolve a possibly relative URL against the path of the request that
/// produced the page. Fragments are dropped.
pub fn resolve_link(request_path: &str, link: &str) -> String {
    let link = link.split('#').next().unwrap_or("");
    if link.starts_with('/') {
        return link.to_string();
    }
    let dir_end = request_path.rfind('/').map(|i| i + 1).unwrap_or(1);
    format!("{}{}", &request_path[..dir_end], link)
}

/// Extraction plus resolution, as the fuzzer consumes it.
pub fn extract_resolved_links(resp: &HttpResponse, request_path: &str) -> Vec<String> {
    extract_links(resp)
        .into_iter()
        .map(|l| resolve_link(request_path, &l))
        .collect()
}
