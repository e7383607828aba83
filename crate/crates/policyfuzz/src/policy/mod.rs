//! The policy engines under test: a Chromium-style CORB with confirmation
//! sniffing, a WebKit-style strict CORB, and an ORB-style whitelist engine.
//! All three are pure functions of the response plus declarative tables.

pub mod sniff;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpResponse, PolicyDecision, Reason};
pub use sniff::{sniff_html, sniff_json, sniff_xml, SnifferVerdict};

pub const CHROMIUM_CORB: &str = "chromium-corb";
pub const WEBKIT_CORB: &str = "webkit-corb";
pub const ORB: &str = "orb";

#[derive(Debug, Error)]
pub enum PolicyConfigError {
    #[error("protected MIME sets must be pairwise disjoint; {0:?} appears twice")]
    OverlappingMime(String),
    #[error("signature {0:?} has odd-length or non-hex magic")]
    BadMagic(String),
    #[error("unknown engine id {0:?}")]
    UnknownEngine(String),
}

/// The MIME types the blacklist engines treat as secret-bearing, split by
/// the sniffer used to confirm them. The four sets are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedMimeSet {
    pub json_types: BTreeSet<String>,
    pub xml_types: BTreeSet<String>,
    pub html_types: BTreeSet<String>,
    pub plain_types: BTreeSet<String>,
}

impl ProtectedMimeSet {
    pub fn validate(&self) -> Result<(), PolicyConfigError> {
        let mut seen = BTreeSet::new();
        for set in [
            &self.json_types,
            &self.xml_types,
            &self.html_types,
            &self.plain_types,
        ] {
            for mime in set {
                if !seen.insert(mime.clone()) {
                    return Err(PolicyConfigError::OverlappingMime(mime.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, essence: &str) -> bool {
        self.json_types.contains(essence)
            || self.xml_types.contains(essence)
            || self.html_types.contains(essence)
            || self.plain_types.contains(essence)
    }
}

/// One magic-byte entry in the whitelist signature table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaSignature {
    pub name: String,
    #[serde(default)]
    pub offset: usize,
    /// Hex-encoded byte prefix expected at `offset`.
    pub magic: String,
}

impl MediaSignature {
    fn magic_bytes(&self) -> Result<Vec<u8>, PolicyConfigError> {
        let s = &self.magic;
        if !s.len().is_multiple_of(2) {
            return Err(PolicyConfigError::BadMagic(self.name.clone()));
        }
        (0..s.len())
            .step_by(2)
            .map(|i| {
                u8::from_str_radix(&s[i..i + 2], 16)
                    .map_err(|_| PolicyConfigError::BadMagic(self.name.clone()))
            })
            .collect()
    }

    pub fn matches(&self, body: &[u8]) -> bool {
        match self.magic_bytes() {
            Ok(magic) => {
                body.len() >= self.offset + magic.len()
                    && body[self.offset..self.offset + magic.len()] == magic[..]
            }
            Err(_) => false,
        }
    }
}

/// Whitelist-engine tables: safelisted MIME essences (a trailing `/*`
/// matches the whole top-level type) plus media signatures and the
/// permissive text checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbConfig {
    pub mime_safelist: Vec<String>,
    pub signatures: Vec<MediaSignature>,
    pub js_tokens: Vec<String>,
}

impl OrbConfig {
    pub fn validate(&self) -> Result<(), PolicyConfigError> {
        for sig in &self.signatures {
            sig.magic_bytes()?;
        }
        Ok(())
    }

    fn mime_safelisted(&self, essence: &str) -> bool {
        self.mime_safelist.iter().any(|entry| {
            if let Some(prefix) = entry.strip_suffix("/*") {
                essence
                    .split_once('/')
                    .map(|(ty, _)| ty == prefix)
                    .unwrap_or(false)
            } else {
                entry == essence
            }
        })
    }
}

/// Plain-text shaped: no control bytes other than tab/newline/CR.
fn is_plausible_text(body: &[u8]) -> bool {
    !body.is_empty()
        && body
            .iter()
            .all(|&b| b >= 0x20 || matches!(b, b'\t' | b'\n' | b'\r'))
}

fn first_non_ws(body: &[u8]) -> Option<u8> {
    body.iter()
        .copied()
        .find(|b| !matches!(b, b' ' | b'\t' | b'\n' | b'\r'))
}

/// Stylesheet-shaped text: balanced-ish rule braces and a first byte that
/// rules out markup and JSON containers.
fn looks_like_css(body: &[u8]) -> bool {
    if !is_plausible_text(body) {
        return false;
    }
    match first_non_ws(body) {
        Some(b'<') | Some(b'{') | Some(b'[') | None => return false,
        _ => {}
    }
    body.contains(&b'{') && body.contains(&b'}')
}

/// Script-shaped text: carries at least one of the configured tokens.
fn looks_like_js(body: &[u8], tokens: &[String]) -> bool {
    if !is_plausible_text(body) {
        return false;
    }
    match first_non_ws(body) {
        Some(b'<') | Some(b'{') | Some(b'[') | None => return false,
        _ => {}
    }
    let text = String::from_utf8_lossy(body);
    tokens.iter().any(|t| text.contains(t.as_str()))
}

/// Chromium-style check: scheme gate, protected-MIME gate, then
/// confirmation sniffing per MIME family before blocking.
pub fn corb_check_chromium(resp: &HttpResponse, protected: &ProtectedMimeSet) -> PolicyDecision {
    if !resp.scheme().is_http_like() {
        return PolicyDecision::allow(CHROMIUM_CORB, Reason::NonHttpScheme);
    }
    let essence = match resp.content_type() {
        Some(e) if protected.contains(e) => e.to_string(),
        _ => return PolicyDecision::allow(CHROMIUM_CORB, Reason::UnprotectedMime),
    };
    let body = resp.body();
    if protected.json_types.contains(&essence) && !sniff_json(body).matches {
        return PolicyDecision::allow(CHROMIUM_CORB, Reason::SniffMismatch);
    }
    if protected.xml_types.contains(&essence) && !sniff_xml(body).matches {
        return PolicyDecision::allow(CHROMIUM_CORB, Reason::SniffMismatch);
    }
    if protected.html_types.contains(&essence) && !sniff_html(body).matches {
        return PolicyDecision::allow(CHROMIUM_CORB, Reason::SniffMismatch);
    }
    if protected.plain_types.contains(&essence)
        && !sniff_json(body).matches
        && !sniff_xml(body).matches
        && !sniff_html(body).matches
    {
        return PolicyDecision::allow(CHROMIUM_CORB, Reason::SniffMismatch);
    }
    PolicyDecision::block(CHROMIUM_CORB, Reason::ProtectedBlocked)
}

/// WebKit-style check: like the Chromium engine minus all sniffing — any
/// HTTP(S) response with a protected MIME type is blocked.
pub fn corb_check_webkit(resp: &HttpResponse, protected: &ProtectedMimeSet) -> PolicyDecision {
    if !resp.scheme().is_http_like() {
        return PolicyDecision::allow(WEBKIT_CORB, Reason::NonHttpScheme);
    }
    match resp.content_type() {
        Some(e) if protected.contains(e) => {
            PolicyDecision::block(WEBKIT_CORB, Reason::ProtectedBlocked)
        }
        _ => PolicyDecision::allow(WEBKIT_CORB, Reason::UnprotectedMime),
    }
}

/// Whitelist check: allow only when the response sniffs as a whitelisted
/// media kind or its MIME essence is safelisted; block everything else.
pub fn orb_check(resp: &HttpResponse, orb: &OrbConfig) -> PolicyDecision {
    if !resp.scheme().is_http_like() {
        return PolicyDecision::allow(ORB, Reason::NonHttpScheme);
    }
    if let Some(essence) = resp.content_type() {
        if orb.mime_safelisted(essence) {
            return PolicyDecision::allow(ORB, Reason::WhitelistPass);
        }
    }
    let body = resp.body();
    let signature_hit = orb.signatures.iter().any(|sig| sig.matches(body));
    if signature_hit || looks_like_css(body) || looks_like_js(body, &orb.js_tokens) {
        return PolicyDecision::allow(ORB, Reason::WhitelistPass);
    }
    PolicyDecision::block(ORB, Reason::WhitelistFail)
}

/// The engines a campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EngineKind {
    ChromiumCorb,
    WebkitCorb,
    Orb,
}

impl EngineKind {
    pub fn id(self) -> &'static str {
        match self {
            EngineKind::ChromiumCorb => CHROMIUM_CORB,
            EngineKind::WebkitCorb => WEBKIT_CORB,
            EngineKind::Orb => ORB,
        }
    }

    pub fn from_id(id: &str) -> Result<Self, PolicyConfigError> {
        match id {
            CHROMIUM_CORB => Ok(EngineKind::ChromiumCorb),
            WEBKIT_CORB => Ok(EngineKind::WebkitCorb),
            ORB => Ok(EngineKind::Orb),
            other => Err(PolicyConfigError::UnknownEngine(other.to_string())),
        }
    }

    pub fn check(
        self,
        resp: &HttpResponse,
        protected: &ProtectedMimeSet,
        orb: &OrbConfig,
    ) -> PolicyDecision {
        match self {
            EngineKind::ChromiumCorb => corb_check_chromium(resp, protected),
            EngineKind::WebkitCorb => corb_check_webkit(resp, protected),
            EngineKind::Orb => orb_check(resp, orb),
        }
    }
}
