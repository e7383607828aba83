//! HTTP-shaped value types shared by the runtime, the policy engines, the
//! fuzzer and the reporter. These model just enough of HTTP for policy
//! decisions: no sockets, TLS, redirects or caching.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("status code {0} outside 100..=599")]
    InvalidStatus(u16),
    #[error("request path must be non-empty and start with '/': {0:?}")]
    InvalidPath(String),
    #[error("query parameter names must be non-empty")]
    EmptyParamName,
    #[error("invalid header name {0:?}")]
    InvalidHeaderName(String),
    #[error("header value for {0:?} contains a line break")]
    InvalidHeaderValue(String),
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture is empty")]
    Empty,
    #[error("malformed STATUS line: {0:?}")]
    BadStatusLine(String),
    #[error("malformed header line: {0:?}")]
    BadHeaderLine(String),
    #[error("missing blank line before body")]
    MissingBodySeparator,
    #[error(transparent)]
    Http(#[from] HttpError),
}

/// Transport scheme of a simulated load. Everything that is not HTTP(S) is
/// collapsed into `Other`; the engines only gate on the HTTP(S) distinction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Http,
    Https,
    Other,
}

impl Scheme {
    pub fn is_http_like(self) -> bool {
        matches!(self, Scheme::Http | Scheme::Https)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Http => "HTTP",
            Scheme::Https => "HTTPS",
            Scheme::Other => "OTHER",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "HTTP" => Ok(Scheme::Http),
            "HTTPS" => Ok(Scheme::Https),
            "OTHER" => Ok(Scheme::Other),
            _ => Err(()),
        }
    }
}

/// A simulated request: path, ordered query parameters and whether the
/// initiator sits on a different origin. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    scheme: Scheme,
    path: String,
    query_params: Vec<(String, String)>,
    cross_origin: bool,
}

impl HttpRequest {
    pub fn new(
        scheme: Scheme,
        path: impl Into<String>,
        query_params: Vec<(String, String)>,
        cross_origin: bool,
    ) -> Result<Self, HttpError> {
        let path = path.into();
        if path.is_empty() || !path.starts_with('/') {
            return Err(HttpError::InvalidPath(path));
        }
        if query_params.iter().any(|(name, _)| name.is_empty()) {
            return Err(HttpError::EmptyParamName);
        }
        Ok(Self {
            scheme,
            path,
            query_params,
            cross_origin,
        })
    }

    /// Parse a path-and-query string such as `/a.app?x=1&y=2`. Percent
    /// escapes (`%XX`) in names and values are decoded.
    pub fn parse_url(scheme: Scheme, url: &str, cross_origin: bool) -> Result<Self, HttpError> {
        let (path, query) = match url.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (url, None),
        };
        let mut params = Vec::new();
        if let Some(q) = query {
            for piece in q.split('&').filter(|p| !p.is_empty()) {
                let (name, value) = match piece.split_once('=') {
                    Some((n, v)) => (n, v),
                    None => (piece, ""),
                };
                params.push((percent_decode(name), percent_decode(value)));
            }
        }
        Self::new(scheme, percent_decode(path), params, cross_origin)
    }

    /// Canonical URL string used for visited-set keys and reports.
    pub fn url_string(&self) -> String {
        let mut out = percent_encode(&self.path, true);
        for (i, (name, value)) in self.query_params.iter().enumerate() {
            out.push(if i == 0 { '?' } else { '&' });
            out.push_str(&percent_encode(name, false));
            out.push('=');
            out.push_str(&percent_encode(value, false));
        }
        out
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query_params(&self) -> &[(String, String)] {
        &self.query_params
    }

    /// First value for `name`, if present.
    pub fn param(&self, name: &str) -> Option<&str> {
        self.query_params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn cross_origin(&self) -> bool {
        self.cross_origin
    }

    /// Rebuild with a different parameter list (used by the mutator).
    pub fn with_params(&self, query_params: Vec<(String, String)>) -> Result<Self, HttpError> {
        Self::new(
            self.scheme,
            self.path.clone(),
            query_params,
            self.cross_origin,
        )
    }
}

fn percent_encode(s: &str, keep_slash: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        let plain = b.is_ascii_alphanumeric()
            || matches!(b, b'-' | b'.' | b'_' | b'~')
            || (keep_slash && b == b'/');
        if plain {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            if let (Some(hi), Some(lo)) = (
                bytes.get(i + 1).and_then(|b| (*b as char).to_digit(16)),
                bytes.get(i + 2).and_then(|b| (*b as char).to_digit(16)),
            ) {
                out.push((hi * 16 + lo) as u8);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// The distinguished "no usable MIME" value for responses without a parsable
/// Content-Type header is `None`.
pub type MimeEssence = Option<String>;

/// Lowercased `type/subtype` with parameters stripped, or `None` when the
/// input has no `/` separator (or an empty type or subtype).
pub fn parse_content_type(raw: &str) -> MimeEssence {
    let essence = raw.split(';').next().unwrap_or("").trim();
    let (ty, subty) = essence.split_once('/')?;
    if ty.is_empty() || subty.is_empty() {
        return None;
    }
    Some(essence.to_ascii_lowercase())
}

/// A simulated response. `content_type` is derived from the last
/// Content-Type header at construction time; the raw bytes stay in `body`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    scheme: Scheme,
    status: u16,
    headers: Vec<(String, String)>,
    content_type: MimeEssence,
    body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(
        scheme: Scheme,
        status: u16,
        headers: Vec<(String, String)>,
        body: Vec<u8>,
    ) -> Result<Self, HttpError> {
        if !(100..=599).contains(&status) {
            return Err(HttpError::InvalidStatus(status));
        }
        for (name, value) in &headers {
            if name.is_empty() || name.contains(':') || name.chars().any(|c| c.is_control()) {
                return Err(HttpError::InvalidHeaderName(name.clone()));
            }
            if value.contains('\n') || value.contains('\r') {
                return Err(HttpError::InvalidHeaderValue(name.clone()));
            }
        }
        let content_type = headers
            .iter()
            .rev()
            .find(|(n, _)| n.eq_ignore_ascii_case("Content-Type"))
            .and_then(|(_, v)| parse_content_type(v));
        Ok(Self {
            scheme,
            status,
            headers,
            content_type,
            body,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn status(&self) -> u16 {
        self.status
    }

    pub fn headers(&self) -> &[(String, String)] {
        &self.headers
    }

    /// Case-insensitive lookup returning the last occurrence.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .rev()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn content_type(&self) -> Option<&str> {
        self.content_type.as_deref()
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// Serialize to the line-oriented capture format:
    /// `STATUS <code> <scheme>`, one `H <name>: <value>` line per header,
    /// a blank line, then the raw body bytes.
    pub fn to_capture(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + 64);
        out.extend_from_slice(format!("STATUS {} {}\n", self.status, self.scheme).as_bytes());
        for (name, value) in &self.headers {
            out.extend_from_slice(format!("H {name}: {value}\n").as_bytes());
        }
        out.push(b'\n');
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_capture(data: &[u8]) -> Result<Self, CaptureError> {
        let mut rest = data;
        let mut headers = Vec::new();
        let mut status_scheme: Option<(u16, Scheme)> = None;
        loop {
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or(CaptureError::MissingBodySeparator)?;
            let line = String::from_utf8_lossy(&rest[..nl]).into_owned();
            rest = &rest[nl + 1..];
            if let Some((status, scheme)) = status_scheme {
                if line.is_empty() {
                    return Ok(Self::new(scheme, status, headers, rest.to_vec())?);
                }
                let body = line
                    .strip_prefix("H ")
                    .ok_or_else(|| CaptureError::BadHeaderLine(line.clone()))?;
                let (name, value) = body
                    .split_once(": ")
                    .ok_or_else(|| CaptureError::BadHeaderLine(line.clone()))?;
                headers.push((name.to_string(), value.to_string()));
            } else {
                let mut parts = line.split_whitespace();
                match (parts.next(), parts.next(), parts.next(), parts.next()) {
                    (Some("STATUS"), Some(code), Some(scheme), None) => {
                        let code: u16 = code
                            .parse()
                            .map_err(|_| CaptureError::BadStatusLine(line.clone()))?;
                        let scheme: Scheme = scheme
                            .parse()
                            .map_err(|()| CaptureError::BadStatusLine(line.clone()))?;
                        status_scheme = Some((code, scheme));
                    }
                    _ if line.is_empty() => return Err(CaptureError::Empty),
                    _ => return Err(CaptureError::BadStatusLine(line)),
                }
            }
        }
    }
}

/// Engine verdict on one response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Allow,
    Block,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Allow => "ALLOW",
            Verdict::Block => "BLOCK",
        })
    }
}

/// Why an engine decided the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    NonHttpScheme,
    UnprotectedMime,
    SniffMismatch,
    ProtectedBlocked,
    WhitelistPass,
    WhitelistFail,
}

impl Reason {
    fn is_block_reason(self) -> bool {
        matches!(self, Reason::ProtectedBlocked | Reason::WhitelistFail)
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::NonHttpScheme => "NON_HTTP_SCHEME",
            Reason::UnprotectedMime => "UNPROTECTED_MIME",
            Reason::SniffMismatch => "SNIFF_MISMATCH",
            Reason::ProtectedBlocked => "PROTECTED_BLOCKED",
            Reason::WhitelistPass => "WHITELIST_PASS",
            Reason::WhitelistFail => "WHITELIST_FAIL",
        })
    }
}

/// Per-engine decision. Construct through [`PolicyDecision::allow`] /
/// [`PolicyDecision::block`], which enforce that BLOCK only pairs with a
/// blocking reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub engine_id: String,
    pub verdict: Verdict,
    pub reason: Reason,
}

impl PolicyDecision {
    pub fn allow(engine_id: &str, reason: Reason) -> Self {
        assert!(
            !reason.is_block_reason(),
            "ALLOW cannot carry blocking reason {reason}"
        );
        Self {
            engine_id: engine_id.to_string(),
            verdict: Verdict::Allow,
            reason,
        }
    }

    pub fn block(engine_id: &str, reason: Reason) -> Self {
        assert!(
            reason.is_block_reason(),
            "BLOCK must carry a blocking reason, got {reason}"
        );
        Self {
            engine_id: engine_id.to_string(),
            verdict: Verdict::Block,
            reason,
        }
    }

    pub fn is_block(&self) -> bool {
        self.verdict == Verdict::Block
    }
}

impl fmt::Display for PolicyDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.engine_id, self.verdict, self.reason)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_content_type_normalizes() {
        assert_eq!(
            parse_content_type("application/JSON; charset=utf-8").as_deref(),
            Some("application/json")
        );
        assert_eq!(
            parse_content_type("text/html").as_deref(),
            Some("text/html")
        );
        assert_eq!(parse_content_type("garbage"), None);
        assert_eq!(parse_content_type(""), None);
        assert_eq!(parse_content_type("text/"), None);
    }

    #[test]
    fn response_derives_content_type_from_last_header() {
        let resp = HttpResponse::new(
            Scheme::Https,
            200,
            vec![
                ("Content-Type".into(), "text/html".into()),
                ("content-type".into(), "application/JSON".into()),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(resp.content_type(), Some("application/json"));
        assert_eq!(resp.header("CONTENT-TYPE"), Some("application/JSON"));
    }

    #[test]
    fn response_without_content_type_is_none() {
        let resp = HttpResponse::new(Scheme::Http, 204, vec![], vec![]).unwrap();
        assert_eq!(resp.content_type(), None);
    }

    #[test]
    fn status_out_of_range_is_rejected() {
        assert!(HttpResponse::new(Scheme::Http, 99, vec![], vec![]).is_err());
        assert!(HttpResponse::new(Scheme::Http, 600, vec![], vec![]).is_err());
    }

    #[test]
    fn request_invariants() {
        assert!(HttpRequest::new(Scheme::Https, "", vec![], true).is_err());
        assert!(HttpRequest::new(Scheme::Https, "a/b", vec![], true).is_err());
        assert!(
            HttpRequest::new(Scheme::Https, "/a", vec![("".into(), "v".into())], true).is_err()
        );
    }

    #[test]
    fn url_round_trip_with_control_bytes() {
        let req = HttpRequest::new(
            Scheme::Https,
            "/x.app",
            vec![("q".into(), "a\u{17}b".into())],
            true,
        )
        .unwrap();
        let url = req.url_string();
        let back = HttpRequest::parse_url(Scheme::Https, &url, true).unwrap();
        assert_eq!(req, back);
    }

    #[test]
    fn capture_round_trip() {
        let resp = HttpResponse::new(
            Scheme::Https,
            200,
            vec![("Content-Type".into(), "application/json".into())],
            b"{\"a\":1}\nrest".to_vec(),
        )
        .unwrap();
        let cap = resp.to_capture();
        let back = HttpResponse::from_capture(&cap).unwrap();
        assert_eq!(resp, back);
    }

    #[test]
    #[should_panic]
    fn block_requires_blocking_reason() {
        let _ = PolicyDecision::block("x", Reason::SniffMismatch);
    }

    #[test]
    #[should_panic]
    fn allow_rejects_blocking_reason() {
        let _ = PolicyDecision::allow("x", Reason::ProtectedBlocked);
    }
}
